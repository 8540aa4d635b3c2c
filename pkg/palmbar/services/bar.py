"""
Empirical adjoint-relationship checks.

Over a path, f(X(T)) - f(X(0)) is the sum of the drift integrals of Hf over
the inter-event segments plus the sum of the per-clock jumps at the epochs.
Divided by the elapsed time, the two sums estimate E[Hf(X)] and
alpha_j E_j[Delta_j f], whose total must vanish under the stationary law.
"""
import logging
import math
from typing import Callable, Dict, List, Optional, Sequence

from pydantic import BaseModel

from palmbar.core.config import settings
from palmbar.core.errors import InsufficientData, NotApplicable, UnboundedTestFunction
from palmbar.models.network import FiniteQueueModel
from palmbar.models.state import EventRecord, SystemState
from palmbar.schemas.estimate import EstimateWithCI
from palmbar.services.accumulators import Accumulator
from palmbar.services.engine import SimulationRun
from palmbar.services.palm import blocked_arrival_fraction, intensity, occupancy_probability
from palmbar.services.test_functions import ExponentialFamilyFunction, TestFunction

logger = logging.getLogger(__name__)

VERDICT_SE = 3.0


class BarAccumulator(Accumulator):
    """Per-batch drift integrals and per-clock jump sums of one test function."""

    def __init__(self, f: TestFunction, d: int):
        self.f = f
        self.d = d
        self.exponential = f if isinstance(f, ExponentialFamilyFunction) else None
        if not f.bounded:
            logger.warning("test function %s is unbounded; guarding path sums", f.name)

    @property
    def key(self) -> str:
        return f"bar:{self.f.name}"

    def bind(self, batches: int) -> None:
        super().bind(batches)
        clocks = 2 * self.d
        self.drift = [0.0] * batches
        self.jumps = [[0.0] * clocks for _ in range(batches)]
        self.firings = [[0] * clocks for _ in range(batches)]
        self.coordinates = [[0.0] * clocks for _ in range(batches)]
        self.scale = 0.0

    def _guard(self, value: float) -> float:
        if not math.isfinite(value) or abs(value) > settings.UNBOUNDED_GUARD:
            raise UnboundedTestFunction(f"{self.f.name} produced {value!r}")
        return value

    def on_segment(self, state: SystemState, duration: float, batch: int) -> None:
        integral = self._guard(self.f.segment_integral(state, duration))
        self.drift[batch] += integral
        self.scale += abs(integral)
        if self.exponential is not None:
            parts = self.exponential.coordinate_integrals(state, duration)
            row = self.coordinates[batch]
            for j, part in parts.items():
                row[j - 1] += part

    def on_event(self, record: EventRecord, batch: int) -> None:
        jumps = self.jumps[batch]
        firings = self.firings[batch]
        for j in record.fired:
            jump = self._guard(record.jump(j, self.f.value))
            jumps[j - 1] += jump
            firings[j - 1] += 1
            self.scale += abs(jump)

    def jump_batches(self, j: int) -> List[float]:
        return [row[j - 1] for row in self.jumps]

    def firing_batches(self, j: int) -> List[float]:
        return [float(row[j - 1]) for row in self.firings]


def _clocks(run: SimulationRun) -> List[int]:
    """Clocks that can fire: exogenous arrival clocks and every service clock."""
    network = run.model.as_network()
    d = network.d
    return [i + 1 for i in network.exogenous] + list(range(d + 1, 2 * d + 1))


class BarReport(BaseModel):
    """Drift term, per-clock jump terms and their sum for one test function."""

    test_function: str
    drift_term: EstimateWithCI
    jump_terms: Dict[int, EstimateWithCI]
    residual: EstimateWithCI
    verdict: bool
    jump_means: Dict[int, EstimateWithCI] = {}
    jump_nulling: Dict[int, bool] = {}
    drift_parts: Dict[int, EstimateWithCI] = {}
    path_residual: Optional[float] = None

    def summary(self) -> dict:
        return {
            "test_function": self.test_function,
            "drift_term": self.drift_term.summary(),
            "jump_terms": {j: est.summary() for j, est in self.jump_terms.items()},
            "jump_means": {j: est.summary() for j, est in self.jump_means.items()},
            "jump_nulling": self.jump_nulling,
            "drift_parts": {j: est.summary() for j, est in self.drift_parts.items()},
            "residual": self.residual.summary(),
            "path_residual": self.path_residual,
            "verdict": self.verdict,
        }


def _verdict(estimate: EstimateWithCI, scale: float = 0.0, target: float = 0.0) -> bool:
    """Within VERDICT_SE standard errors of ``target``, or equal up to rounding relative to ``scale``."""
    slack = max(VERDICT_SE * estimate.stderr, settings.IDENTITY_TOLERANCE * scale)
    return abs(estimate.value - target) <= slack


def _assemble(
    name: str,
    drift_term: EstimateWithCI,
    jump_terms: Dict[int, EstimateWithCI],
    jump_means: Dict[int, EstimateWithCI],
    drift_parts: Dict[int, EstimateWithCI],
    path_residual: Optional[float],
) -> BarReport:
    residual = EstimateWithCI.linear(
        [(1.0, drift_term), *((1.0, term) for term in jump_terms.values())]
    )
    scale = max([abs(drift_term.value), *(abs(term.value) for term in jump_terms.values())])
    return BarReport(
        test_function=name,
        drift_term=drift_term,
        jump_terms=jump_terms,
        residual=residual,
        verdict=_verdict(residual, scale),
        jump_means=jump_means,
        jump_nulling={j: _verdict(mean) for j, mean in jump_means.items()},
        drift_parts=drift_parts,
        path_residual=path_residual,
    )


def bar_residual(run: SimulationRun, f: TestFunction) -> BarReport:
    """Estimate E[Hf] + sum_j alpha_j E_j[Delta_j f] with its batch-means error."""
    run.require_data()
    sink = run.collect(BarAccumulator(f, run.d))
    elapsed = run.batch_elapsed
    drift_term = EstimateWithCI.from_ratio(sink.drift, elapsed, count=run.events)
    jump_terms: Dict[int, EstimateWithCI] = {}
    jump_means: Dict[int, EstimateWithCI] = {}
    drift_parts: Dict[int, EstimateWithCI] = {}
    for j in _clocks(run):
        jump_terms[j] = EstimateWithCI.from_ratio(sink.jump_batches(j), elapsed, count=run.events)
        try:
            jump_means[j] = EstimateWithCI.from_ratio(sink.jump_batches(j), sink.firing_batches(j))
        except InsufficientData:
            logger.debug("clock %d fired in fewer than two batches", j)
        if sink.exponential is not None:
            parts = [row[j - 1] for row in sink.coordinates]
            drift_parts[j] = EstimateWithCI.from_ratio(parts, elapsed, count=run.events)
    increment = f.value(run.end_state) - f.value(run.start_state)
    return _assemble(f.name, drift_term, jump_terms, jump_means, drift_parts, increment / run.elapsed)


def merge_bar_reports(reports: Sequence[BarReport]) -> BarReport:
    """Pool replications of the same test function."""
    first = reports[0]

    def pooled(getter: Callable[[BarReport], Dict[int, EstimateWithCI]]) -> Dict[int, EstimateWithCI]:
        keys = set.intersection(*(set(getter(report)) for report in reports))
        return {j: EstimateWithCI.merge([getter(report)[j] for report in reports]) for j in sorted(keys)}

    logger.debug("merging %d reports for %s", len(reports), first.test_function)
    paths = [report.path_residual for report in reports if report.path_residual is not None]
    return _assemble(
        first.test_function,
        EstimateWithCI.merge([report.drift_term for report in reports]),
        pooled(lambda report: report.jump_terms),
        pooled(lambda report: report.jump_means),
        pooled(lambda report: report.drift_parts),
        math.fsum(paths) / len(paths) if paths else None,
    )


class TelescopingReport(BaseModel):
    """f(X(T)) - f(X(0)) against the summed drift integrals and jumps."""

    test_function: str
    increment: float
    drift_sum: float
    jump_sum: float
    gap: float
    relative_gap: float
    passed: bool


def telescoping_check(run: SimulationRun, f: TestFunction) -> TelescopingReport:
    run.require_data()
    sink = run.collect(BarAccumulator(f, run.d))
    increment = f.value(run.end_state) - f.value(run.start_state)
    drift_sum = math.fsum(sink.drift)
    jump_sum = math.fsum(x for row in sink.jumps for x in row)
    gap = abs(increment - drift_sum - jump_sum)
    relative = gap / max(1.0, sink.scale)
    return TelescopingReport(
        test_function=f.name,
        increment=increment,
        drift_sum=drift_sum,
        jump_sum=jump_sum,
        gap=gap,
        relative_gap=relative,
        passed=relative <= settings.IDENTITY_TOLERANCE,
    )


class RateConservationReport(BaseModel):
    """1 - rho = P(L=0) - rho P_1(L(0-) = ell0) and the service-throughput identities."""

    rho: float
    left: float
    right: EstimateWithCI
    idle: EstimateWithCI
    blocking: EstimateWithCI
    throughput_counted: EstimateWithCI
    throughput_from_blocking: EstimateWithCI
    throughput_from_idle: EstimateWithCI
    passed: bool

    def summary(self) -> dict:
        return {
            "rho": self.rho,
            "left": self.left,
            "right": self.right.summary(),
            "idle": self.idle.summary(),
            "blocking": self.blocking.summary(),
            "throughput_counted": self.throughput_counted.summary(),
            "throughput_from_blocking": self.throughput_from_blocking.summary(),
            "throughput_from_idle": self.throughput_from_idle.summary(),
            "passed": self.passed,
        }


def _rate_conservation(
    rho: float,
    lam: float,
    mu: float,
    idle: EstimateWithCI,
    blocking: EstimateWithCI,
    counted: EstimateWithCI,
) -> RateConservationReport:
    left = 1.0 - rho
    right = EstimateWithCI.linear([(1.0, idle), (-rho, blocking)])
    return RateConservationReport(
        rho=rho,
        left=left,
        right=right,
        idle=idle,
        blocking=blocking,
        throughput_counted=counted,
        throughput_from_blocking=EstimateWithCI.linear([(-lam, blocking)], constant=lam),
        throughput_from_idle=EstimateWithCI.linear([(-mu, idle)], constant=mu),
        passed=_verdict(right, scale=max(1.0, abs(left)), target=left),
    )


def rate_conservation_check(run: SimulationRun) -> RateConservationReport:
    """Both sides of the finite-queue rate conservation law from one path."""
    model = run.model
    if not isinstance(model, FiniteQueueModel):
        raise NotApplicable("rate conservation is checked on finite-queue runs")
    return _rate_conservation(
        model.rho,
        model.arrival.intensity,
        model.service.intensity,
        occupancy_probability(run, 1, 0),
        blocked_arrival_fraction(run),
        intensity(run, 2),
    )


def merge_rate_reports(
    reports: Sequence[RateConservationReport], model: FiniteQueueModel
) -> RateConservationReport:
    return _rate_conservation(
        model.rho,
        model.arrival.intensity,
        model.service.intensity,
        EstimateWithCI.merge([report.idle for report in reports]),
        EstimateWithCI.merge([report.blocking for report in reports]),
        EstimateWithCI.merge([report.throughput_counted for report in reports]),
    )
