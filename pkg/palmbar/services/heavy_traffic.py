"""
Heavy-traffic limits of the finite-buffer queue.

The scaled family keeps the service law fixed and rescales the arrival law
to rate mu (1 - r b), with buffer round(ell0 / r). As r -> 0 the scaled queue
length r L has density proportional to exp(-beta x) on [0, ell0] (uniform
when b = 0), and P(L = 0) and the blocking probability both vanish linearly
in r with explicit coefficients.
"""
import logging
import math
from concurrent.futures import Executor
from typing import Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, Field, model_validator

from palmbar.core.errors import InsufficientData, ZeroVariance
from palmbar.models.distributions import DistributionSpec
from palmbar.models.network import FiniteQueueModel
from palmbar.schemas.estimate import EstimateWithCI
from palmbar.services.engine import SimulationRun, simulate
from palmbar.services.palm import blocked_arrival_fraction, occupancy_probability
from palmbar.services.stochastics import AUXILIARY, RngStream

logger = logging.getLogger(__name__)

_BALANCE_SLACK = 1e-9


def beta_of(b: float, lam: float, mu: float, sigma_e: float, sigma_s: float) -> float:
    """beta = 2 b / (lam^2 sigma_e^2 + mu^2 sigma_s^2); sigmas are standard deviations."""
    if abs(lam - mu) > _BALANCE_SLACK * max(1.0, mu):
        logger.warning("beta_of expects balanced rates, got lam=%g mu=%g", lam, mu)
    spread = lam**2 * sigma_e**2 + mu**2 * sigma_s**2
    if spread == 0.0:
        if b != 0.0:
            raise ZeroVariance("both limiting variances vanish while b != 0")
        return 0.0
    return 2.0 * b / spread


class LimitLaw(BaseModel):
    """Truncated exponential law on [0, ell0]; uniform when beta = 0."""

    beta: float
    ell0: float = Field(gt=0)

    def _norm(self) -> float:
        """beta / (1 - exp(-beta ell0)), continuous at beta = 0."""
        if self.beta == 0.0:
            return 1.0 / self.ell0
        return self.beta / -math.expm1(-self.beta * self.ell0)

    def pdf(self, x: float) -> float:
        if x < 0.0 or x > self.ell0:
            return 0.0
        return self._norm() * math.exp(-self.beta * x)

    def cdf(self, x: float) -> float:
        if x <= 0.0:
            return 0.0
        if x >= self.ell0:
            return 1.0
        if self.beta == 0.0:
            return x / self.ell0
        return math.expm1(-self.beta * x) / math.expm1(-self.beta * self.ell0)

    def mgf(self, theta: float) -> float:
        """E[exp(theta X)]."""
        z = (theta - self.beta) * self.ell0
        ratio = math.expm1(z) / z if z != 0.0 else 1.0
        return self._norm() * self.ell0 * ratio

    def mean(self) -> float:
        if self.beta == 0.0:
            return 0.5 * self.ell0
        x = self.beta * self.ell0
        return 1.0 / self.beta - self.ell0 / math.expm1(x)


def limit_density(beta: float, ell0: float) -> LimitLaw:
    return LimitLaw(beta=beta, ell0=ell0)


def boundary_asymptotics(
    b: float,
    beta: float,
    ell0: float,
    lam: float,
    mu: float,
    sigma_e: float,
    sigma_s: float,
) -> Tuple[float, float]:
    """
    First-order coefficients in r of P(L = 0) and of the arrival-Palm
    probability of a full buffer.
    """
    if b == 0.0:
        c = (lam**2 * sigma_e**2 + mu**2 * sigma_s**2) / (2.0 * ell0)
        return c, c
    x = beta * ell0
    return b / -math.expm1(-x), b / math.expm1(x)


class ScaledFamily(BaseModel):
    """Arrival and service shapes, drift b, limiting buffer ell0 and the r grid."""

    arrival: DistributionSpec
    service: DistributionSpec
    b: float
    ell0: float = Field(gt=0)
    r_grid: List[float]

    class Config:
        """Pydantic config."""
        frozen = True
        extra = "forbid"

    @model_validator(mode="after")
    def check_grid(self) -> "ScaledFamily":
        if not self.r_grid:
            raise ValueError("r_grid is empty")
        if any(not 0.0 < r <= 1.0 for r in self.r_grid):
            raise ValueError("every r must lie in (0, 1]")
        if any(a <= b for a, b in zip(self.r_grid, self.r_grid[1:])):
            raise ValueError("r_grid must be strictly decreasing")
        if any(r * self.b >= 1.0 for r in self.r_grid):
            raise ValueError("r b must stay below 1 so the arrival rate is positive")
        return self

    @property
    def mu(self) -> float:
        return self.service.intensity

    @property
    def sigma_e(self) -> float:
        """Standard deviation of the arrival shape at the limiting rate mu."""
        return math.sqrt(self.arrival.with_mean(1.0 / self.mu).variance)

    @property
    def sigma_s(self) -> float:
        return math.sqrt(self.service.variance)

    @property
    def beta(self) -> float:
        return beta_of(self.b, self.mu, self.mu, self.sigma_e, self.sigma_s)

    def limit(self) -> LimitLaw:
        return limit_density(self.beta, self.ell0)

    def coefficients(self) -> Tuple[float, float]:
        return boundary_asymptotics(
            self.b, self.beta, self.ell0, self.mu, self.mu, self.sigma_e, self.sigma_s
        )

    def ell0_at(self, r: float) -> int:
        return max(1, int(math.floor(self.ell0 / r + 0.5)))

    def lam_at(self, r: float) -> float:
        return self.mu * (1.0 - r * self.b)

    def member(self, r: float) -> FiniteQueueModel:
        """The GI/G/1/ell0 queue of the family at scale r."""
        return FiniteQueueModel(
            arrival=self.arrival.with_mean(1.0 / self.lam_at(r)),
            service=self.service,
            ell0=self.ell0_at(r),
        )


class SweepRow(BaseModel):
    """One r of the sweep."""

    r: float
    ell0: int
    lam: float
    p0: EstimateWithCI
    palm_full: EstimateWithCI
    p0_ratio: float
    full_ratio: float
    ks: float
    ks_se: float
    events: int
    mgf: Dict[float, Tuple[float, float]] = {}

    def csv_row(self) -> List[float]:
        return [
            self.r,
            self.p0.value,
            self.p0.stderr,
            self.palm_full.value,
            self.palm_full.stderr,
            self.p0_ratio,
            self.full_ratio,
            self.ks,
            float(self.events),
        ]


SWEEP_COLUMNS = [
    "r",
    "p0_hat",
    "p0_se",
    "palm_full_hat",
    "palm_full_se",
    "p0_ratio",
    "full_ratio",
    "ks",
    "events",
]


class SweepCriteria(BaseModel):
    """Acceptance bands at the smallest r."""

    p0_tolerance: float = 0.15
    full_tolerance: float = 0.25
    ks_threshold: float = 0.05


class SweepReport(BaseModel):
    b: float
    ell0: float
    beta: float
    c_lower: float
    c_upper: float
    rows: List[SweepRow]
    criteria: Dict[str, bool]
    passed: bool

    def summary(self) -> dict:
        return {
            "b": self.b,
            "ell0": self.ell0,
            "beta": self.beta,
            "c_lower": self.c_lower,
            "c_upper": self.c_upper,
            "criteria": self.criteria,
            "passed": self.passed,
            "mgf": {str(row.r): {str(t): v for t, v in row.mgf.items()} for row in self.rows},
        }


def ks_distance(
    support: Sequence[int], probs: Sequence[float], r: float, law: LimitLaw
) -> float:
    """Sup distance between the law of r L (atoms at r n) and an atomless limit CDF."""
    distance = 0.0
    cumulative = 0.0
    for n, p in zip(support, probs):
        limit = law.cdf(r * n)
        distance = max(distance, abs(cumulative - limit))
        cumulative += p
        distance = max(distance, abs(cumulative - limit))
    return distance


def _scaled_law(run: SimulationRun) -> Tuple[List[int], List[float], float]:
    """Time-average law of L and the largest batch-means error of its CDF."""
    occupancy = run.occupancy
    support = occupancy.support(1)
    total = run.elapsed
    probs = [math.fsum(occupancy.time_at(1, lambda m, n=n: m == n)) / total for n in support]
    cdf_se = 0.0
    for n in support:
        try:
            below = EstimateWithCI.from_ratio(
                occupancy.time_at(1, lambda m, n=n: m <= n), run.batch_elapsed
            )
        except InsufficientData:
            continue
        cdf_se = max(cdf_se, below.stderr)
    return support, probs, cdf_se


def _sweep_point(
    family: ScaledFamily,
    r: float,
    events: int,
    warmup: Optional[float],
    rng: RngStream,
    thetas: Sequence[float],
) -> SweepRow:
    model = family.member(r)
    run = simulate(model, events, rng, warmup)
    c_lower, c_upper = family.coefficients()
    law = family.limit()
    p0 = occupancy_probability(run, 1, 0)
    palm_full = blocked_arrival_fraction(run)
    support, probs, ks_se = _scaled_law(run)
    mgf = {
        theta: (
            math.fsum(p * math.exp(theta * r * n) for n, p in zip(support, probs)),
            law.mgf(theta),
        )
        for theta in thetas
    }
    return SweepRow(
        r=r,
        ell0=model.ell0,
        lam=family.lam_at(r),
        p0=p0,
        palm_full=palm_full,
        p0_ratio=p0.value / (c_lower * r),
        full_ratio=palm_full.value / (c_upper * r),
        ks=ks_distance(support, probs, r, law),
        ks_se=ks_se,
        events=run.events,
        mgf=mgf,
    )


def _evaluate(rows: List[SweepRow], criteria: SweepCriteria) -> Dict[str, bool]:
    last = rows[-1]
    monotone = all(
        later.ks <= earlier.ks + max(earlier.ks_se, later.ks_se)
        for earlier, later in zip(rows, rows[1:])
    )
    return {
        "p0_ratio": abs(last.p0_ratio - 1.0) <= criteria.p0_tolerance,
        "full_ratio": abs(last.full_ratio - 1.0) <= criteria.full_tolerance,
        "ks_threshold": last.ks < criteria.ks_threshold,
        "ks_monotone": monotone,
    }


def ht_sweep(
    family: ScaledFamily,
    events_per_r: int,
    rng: RngStream,
    warmup: Optional[float] = None,
    criteria: Optional[SweepCriteria] = None,
    thetas: Sequence[float] = (-2.0, -1.0, 0.5, 2.0),
    executor: Optional[Executor] = None,
) -> SweepReport:
    """Simulate every member of the family and compare with the limit objects."""
    criteria = criteria or SweepCriteria()
    streams = [rng.child(AUXILIARY, k) for k in range(len(family.r_grid))]
    args = [
        (family, r, events_per_r, warmup, stream, tuple(thetas))
        for r, stream in zip(family.r_grid, streams)
    ]
    if executor is None:
        rows = [_sweep_point(*arg) for arg in args]
    else:
        rows = list(executor.map(_sweep_point, *zip(*args)))
    c_lower, c_upper = family.coefficients()
    checks = _evaluate(rows, criteria)
    logger.info("sweep b=%g ell0=%g: %s", family.b, family.ell0, checks)
    return SweepReport(
        b=family.b,
        ell0=family.ell0,
        beta=family.beta,
        c_lower=c_lower,
        c_upper=c_upper,
        rows=rows,
        criteria=checks,
        passed=all(checks.values()),
    )
