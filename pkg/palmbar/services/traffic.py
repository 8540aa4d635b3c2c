"""
Traffic equation and stability.
"""
import logging
from typing import Union

import numpy as np

from palmbar.core.config import settings
from palmbar.core.errors import SingularRouting
from palmbar.models.network import (
    FiniteQueueModel,
    NetworkModel,
    StabilityVerdict,
    TrafficSolution,
)

logger = logging.getLogger(__name__)

_POWER_ITERATIONS = 2000


def spectral_radius(matrix: np.ndarray, tol: float = settings.SPECTRAL_TOLERANCE) -> float:
    """
    Perron root of a nonnegative matrix by power iteration.

    Iterates on (I + P) / 2, whose diagonal keeps every iterate positive, and
    stops once the Collatz-Wielandt bounds are within ``tol``. Reducible
    matrices where the bounds stall fall back to a dense eigenvalue solve.
    """
    d = matrix.shape[0]
    shifted = 0.5 * (np.eye(d) + matrix)
    x = np.ones(d)
    for _ in range(_POWER_ITERATIONS):
        y = shifted @ x
        ratios = y / x
        lower, upper = ratios.min(), ratios.max()
        if upper - lower < tol:
            return float(lower + upper - 1.0)
        x = y / y.max()
    logger.debug("power iteration stalled; using dense eigenvalues")
    return float(np.abs(np.linalg.eigvals(matrix)).max())


def solve_traffic(model: Union[NetworkModel, FiniteQueueModel]) -> TrafficSolution:
    """alpha = (I - P^T)^-1 lam, rho_i = alpha_i / mu_i."""
    network = model.as_network()
    routing = network.routing_matrix
    radius = spectral_radius(routing)
    if radius >= 1.0 - settings.SPECTRAL_TOLERANCE:
        raise SingularRouting(f"routing spectral radius {radius:.12g} is not below 1")
    lam = network.lam
    mu = network.mu
    alpha = np.linalg.solve(np.eye(network.d) - routing.T, lam)
    rho = alpha / mu
    return TrafficSolution(
        alpha=alpha.tolist(),
        rho=rho.tolist(),
        lam=lam.tolist(),
        mu=mu.tolist(),
        spectral_radius=radius,
    )


def check_stability(model: Union[NetworkModel, FiniteQueueModel]) -> StabilityVerdict:
    """Positive recurrence of the queue process; a finite buffer is recurrent for every rho."""
    solution = solve_traffic(model)
    if isinstance(model, FiniteQueueModel):
        return StabilityVerdict(stable=True, rho=solution.rho)
    unstable = solution.unstable_stations
    return StabilityVerdict(stable=not unstable, unstable=unstable, rho=solution.rho)
