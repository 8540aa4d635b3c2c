"""
Boundary exponents of the exponential test functions.

For an arrival clock, eta solves   e^theta E[exp(-eta (T_e ^ c))] = 1;
for a service clock, zeta solves   e^-theta_i (p_i0 + sum_k p_ik e^theta_k) E[exp(-zeta (T_s ^ c))] = 1.

Both are solved in log form, g(x) = log_factor + log E[exp(-x (T ^ c))], which
is strictly decreasing in x. Brackets grow by doubling from [-1, 1] and the
root is polished with Brent's method.
"""
import logging
import math
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy import optimize

from palmbar.core.config import settings
from palmbar.core.errors import DivergentTransform, NoRoot
from palmbar.models.distributions import DistributionBase
from palmbar.models.network import FiniteQueueModel, NetworkModel
from palmbar.services.test_functions import ExponentialFamilyFunction

logger = logging.getLogger(__name__)

_MAX_DOUBLINGS = 64
_MAX_HALVINGS = 200

Model = Union[NetworkModel, FiniteQueueModel]


def _cutoff(r: float, cutoff: Optional[float]) -> float:
    if cutoff is not None:
        return cutoff
    if not 0.0 < r <= 1.0:
        raise ValueError(f"r must lie in (0, 1], got {r}")
    return 1.0 / r


def _log_transform(dist: DistributionBase, x: float, cutoff: float) -> float:
    """log E[exp(-x (T ^ cutoff))], +inf when it diverges, -inf when it underflows."""
    try:
        value = dist.truncated_exp_moment(x, cutoff)
    except DivergentTransform:
        return math.inf
    if value <= 0.0:
        return -math.inf
    if math.isinf(value):
        return math.inf
    return math.log(value)


def _solve_decreasing(log_factor: float, dist: DistributionBase, cutoff: float) -> float:
    """Root of x -> log_factor + log E[exp(-x (T ^ cutoff))]."""
    if log_factor == 0.0:
        return 0.0

    def g(x: float) -> float:
        return log_factor + _log_transform(dist, x, cutoff)

    direction = 1.0 if log_factor > 0.0 else -1.0
    inner, outer = 0.0, direction
    for _ in range(_MAX_DOUBLINGS):
        value = g(outer)
        if math.isinf(value):
            # outer overshoots into divergence or underflow; pull it back
            for _ in range(_MAX_HALVINGS):
                middle = 0.5 * (inner + outer)
                value = g(middle)
                if math.isinf(value):
                    outer = middle
                elif value * log_factor > 0.0:
                    inner = middle
                else:
                    outer = middle
                    break
            else:
                raise NoRoot(f"no finite bracket for log factor {log_factor:g} with {dist!r}")
            break
        if value * log_factor <= 0.0:
            break
        inner, outer = outer, 2.0 * outer
    else:
        raise NoRoot(f"bracket search exhausted for log factor {log_factor:g} with {dist!r}")

    if g(outer) == 0.0:
        return outer
    lo, hi = sorted((inner, outer))
    root = float(optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4.0 * np.finfo(float).eps, maxiter=500))
    residual = math.expm1(g(root))
    if abs(residual) > settings.ROOT_TOLERANCE:
        raise NoRoot(f"root {root:g} leaves residual {residual:g}")
    return root


def solve_eta(
    i: int,
    theta_i: float,
    r: float,
    arrival_dist: Optional[DistributionBase],
    cutoff: Optional[float] = None,
) -> float:
    """
    Arrival exponent of station ``i`` (1-based).

    Returns 0 for stations without exogenous arrivals. ``cutoff`` defaults
    to 1/r; pass ``math.inf`` for the untruncated equation.
    """
    if arrival_dist is None:
        return 0.0
    return _solve_decreasing(theta_i, arrival_dist, _cutoff(r, cutoff))


def _service_log_factor(theta: Sequence[float], routing: np.ndarray, i: int) -> float:
    row = routing[i]
    exit_probability = max(0.0, 1.0 - float(row.sum()))
    routed = exit_probability + float(np.dot(row, np.exp(np.asarray(theta, dtype=float))))
    return math.log(routed) - theta[i]


def solve_zeta(
    theta: Union[float, Sequence[float]],
    r: float,
    model: Model,
    cutoff: Optional[float] = None,
) -> np.ndarray:
    """Service exponents of every station for the given theta."""
    theta = [float(theta)] if isinstance(theta, (int, float)) else [float(x) for x in theta]
    network = model.as_network()
    if len(theta) != network.d:
        raise ValueError(f"theta has {len(theta)} entries for {network.d} stations")
    c = _cutoff(r, cutoff)
    routing = network.routing_matrix
    zeta = np.zeros(network.d)
    for i in range(network.d):
        log_factor = 0.0 if not any(theta) else _service_log_factor(theta, routing, i)
        zeta[i] = _solve_decreasing(log_factor, network.service_dist(i), c)
    return zeta


def solve_etas(
    theta: Union[float, Sequence[float]],
    r: float,
    model: Model,
    cutoff: Optional[float] = None,
) -> np.ndarray:
    """Arrival exponents of every station."""
    theta = [float(theta)] if isinstance(theta, (int, float)) else [float(x) for x in theta]
    network = model.as_network()
    return np.array(
        [
            solve_eta(i + 1, theta[i], r, network.arrival_dist(i), cutoff)
            for i in range(network.d)
        ]
    )


class Expansion(NamedTuple):
    """Second-order expansion a r + b r^2 of an exponent at theta r."""

    first_order: float
    second_order: float
    r: float

    def approximation(self, r: Optional[float] = None) -> float:
        r = self.r if r is None else r
        return self.first_order * r + self.second_order * r * r


def eta_expansion(theta: float, r: float, dist: DistributionBase) -> Expansion:
    """eta(r theta) = lam theta r + (1/2) lam^3 sigma_e^2 theta^2 r^2 + o(r^2)."""
    mean, variance = dist.moments()
    lam = 1.0 / mean
    return Expansion(lam * theta, 0.5 * lam**3 * variance * theta**2, r)


def zeta_expansion(theta: float, r: float, dist: DistributionBase) -> Expansion:
    """zeta(r theta) = -mu theta r + (1/2) mu^3 sigma_s^2 theta^2 r^2 + o(r^2)."""
    mean, variance = dist.moments()
    mu = 1.0 / mean
    return Expansion(-mu * theta, 0.5 * mu**3 * variance * theta**2, r)


def exponential_test_function(
    model: Model,
    theta: Union[float, Sequence[float]],
    r: float,
    cutoff: Optional[float] = None,
) -> ExponentialFamilyFunction:
    """The exponential test function with solved arrival and service exponents."""
    theta = [float(theta)] if isinstance(theta, (int, float)) else [float(x) for x in theta]
    eta = solve_etas(theta, r, model, cutoff)
    zeta = solve_zeta(theta, r, model, cutoff)
    finite = isinstance(model, FiniteQueueModel)
    bounded = finite or all(x <= 0.0 for x in theta)
    if not bounded:
        logger.warning("theta %s has positive entries on an unbounded network", theta)
    return ExponentialFamilyFunction(
        theta, eta.tolist(), zeta.tolist(), cutoff=_cutoff(r, cutoff), bounded=bounded
    )
