"""
Closed-form stationary laws used as ground truth.

These share nothing with the engine beyond the model and law containers.
"""
import math
from typing import List, Sequence

import numpy as np

from palmbar.core.errors import NotApplicable, UnstableModel
from palmbar.models.distributions import Exponential
from palmbar.models.laws import DiscreteLaw, total_variation
from palmbar.models.network import FiniteQueueModel, NetworkModel
from palmbar.services.traffic import solve_traffic

TAIL_MASS = 1e-13

__all__ = [
    "geometric",
    "jackson_product_form",
    "joint_probability",
    "mm1_finite",
    "total_variation",
]


def mm1_finite(rho: float, ell0: int) -> DiscreteLaw:
    """P(L = n) = (1 - rho) rho^n / (1 - rho^(ell0 + 1)), uniform at rho = 1."""
    if rho <= 0.0:
        raise ValueError(f"rho must be positive, got {rho}")
    if ell0 < 0:
        raise ValueError(f"ell0 must be non-negative, got {ell0}")
    n = np.arange(ell0 + 1)
    if rho == 1.0:
        probs = np.full(ell0 + 1, 1.0 / (ell0 + 1))
    else:
        probs = (1.0 - rho) * rho**n / (1.0 - rho ** (ell0 + 1))
    return DiscreteLaw(support=n.tolist(), probs=probs.tolist())


def geometric(rho: float, tail: float = TAIL_MASS) -> DiscreteLaw:
    """(1 - rho) rho^n truncated at the first n with tail mass rho^(n+1) < tail."""
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"geometric law needs 0 <= rho < 1, got {rho}")
    if rho == 0.0:
        return DiscreteLaw(support=[0], probs=[1.0])
    cap = max(0, math.ceil(math.log(tail) / math.log(rho)) - 1)
    n = np.arange(cap + 1)
    probs = (1.0 - rho) * rho**n
    return DiscreteLaw(support=n.tolist(), probs=probs.tolist())


def jackson_product_form(model: NetworkModel) -> List[DiscreteLaw]:
    """Geometric(rho_i) marginals of an all-exponential stable open network."""
    if isinstance(model, FiniteQueueModel):
        raise NotApplicable("use mm1_finite for finite-buffer queues")
    if not all(isinstance(dist, Exponential) for dist in model.all_dists()):
        raise NotApplicable("product form needs exponential arrival and service laws")
    solution = solve_traffic(model)
    if solution.unstable_stations:
        raise UnstableModel(solution.unstable_stations)
    return [geometric(rho) for rho in solution.rho]


def joint_probability(marginals: Sequence[DiscreteLaw], queue: Sequence[int]) -> float:
    """Product-form probability of the queue-length vector."""
    return math.prod(law.pmf(n) for law, n in zip(marginals, queue))
