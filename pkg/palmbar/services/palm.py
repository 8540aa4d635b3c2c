"""
Intensities and Palm expectations estimated from one simulated path.

Palm expectations are event averages over the epochs of the chosen point
process: N_j for one clock j, N0 (every epoch once) or N_all (every epoch
weighted by its number of simultaneous firings).
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Literal, Union

from pydantic import BaseModel

from palmbar.core.config import settings
from palmbar.core.errors import InsufficientData, MissingIntermediates, NotApplicable
from palmbar.models.laws import DiscreteLaw, total_variation
from palmbar.models.network import FiniteQueueModel
from palmbar.models.state import EventRecord
from palmbar.schemas.estimate import EstimateWithCI
from palmbar.services.accumulators import Accumulator
from palmbar.services.engine import SimulationRun
from palmbar.services.test_functions import TestFunction

logger = logging.getLogger(__name__)

Which = Union[int, Literal["N0", "Nall"]]


def _check_which(run: SimulationRun, which: Which) -> None:
    if which in ("N0", "Nall"):
        return
    if not isinstance(which, int) or not 1 <= which <= 2 * run.d:
        raise ValueError(f"unknown point process {which!r}; use 1..{2 * run.d}, 'N0' or 'Nall'")


# Functionals of an event record. Module-level classes so targets pickle.


@dataclass(frozen=True)
class ConstantFunctional:
    c: float = 1.0

    def __call__(self, record: EventRecord) -> float:
        return self.c


@dataclass(frozen=True)
class PreQueueIndicator:
    """1(L_station(t-) = k)."""

    station: int
    k: int

    def __call__(self, record: EventRecord) -> float:
        return 1.0 if record.pre.L[self.station - 1] == self.k else 0.0


@dataclass(frozen=True)
class PreQueueLength:
    station: int

    def __call__(self, record: EventRecord) -> float:
        return float(record.pre.L[self.station - 1])


@dataclass(frozen=True)
class PalmTarget:
    """A point process and a functional of its epochs."""

    which: Which
    functional: Callable[[EventRecord], float]
    name: str = "functional"

    @property
    def key(self) -> str:
        return f"palm:{self.which}:{self.name}"

    def weight(self, record: EventRecord) -> int:
        if self.which == "N0":
            return 1
        if self.which == "Nall":
            return len(record.fired)
        return 1 if record.fires(int(self.which)) else 0


class PalmAccumulator(Accumulator):
    """Per-batch weighted functional sums and weights for one target."""

    def __init__(self, target: PalmTarget):
        self.target = target

    @property
    def key(self) -> str:
        return self.target.key

    def bind(self, batches: int) -> None:
        super().bind(batches)
        self.sums = [0.0] * batches
        self.weights = [0.0] * batches
        self.largest = 0.0

    def on_event(self, record: EventRecord, batch: int) -> None:
        weight = self.target.weight(record)
        if not weight:
            return
        value = self.target.functional(record)
        self.sums[batch] += weight * value
        self.weights[batch] += weight
        self.largest = max(self.largest, abs(value))


def intensity(run: SimulationRun, which: Which) -> EstimateWithCI:
    """Firings per unit time; N_all counts every simultaneous firing."""
    _check_which(run, which)
    run.require_data()
    counts = run.counts
    if which == "N0":
        numerators: List[float] = [float(x) for x in counts.epochs]
    elif which == "Nall":
        numerators = [float(x) for x in counts.multiplicity]
    else:
        numerators = counts.per_batch(int(which))
    return EstimateWithCI.from_ratio(numerators, run.batch_elapsed, count=int(sum(numerators)))


def palm_expectation(run: SimulationRun, target: PalmTarget) -> EstimateWithCI:
    """Event average of ``target.functional`` over the epochs of ``target.which``."""
    _check_which(run, target.which)
    sink = run.collect(PalmAccumulator(target))
    total = math.fsum(sink.weights)
    if total == 0.0:
        raise InsufficientData(f"{target.which} never fired after warmup")
    if sink.largest > settings.UNBOUNDED_GUARD:
        logger.warning("functional %s reached %.3g; the estimate may be unstable", target.name, sink.largest)
    if sum(1 for weight in sink.weights if weight > 0.0) < 2:
        logger.warning("%s fired in a single batch; the standard error is undefined", target.which)
        return EstimateWithCI(
            value=math.fsum(sink.sums) / total,
            stderr=math.inf,
            count=int(total),
            numerators=sink.sums,
            denominators=sink.weights,
        )
    return EstimateWithCI.from_ratio(sink.sums, sink.weights, count=int(total))


class DecompositionAccumulator(Accumulator):
    """Sums f(post) - f(pre) and the per-clock intermediate increments."""

    def __init__(self, f: TestFunction, d: int):
        self.f = f
        self.d = d

    @property
    def key(self) -> str:
        return f"decomposition:{self.f.name}"

    def bind(self, batches: int) -> None:
        super().bind(batches)
        self.left = 0.0
        self.right = 0.0
        self.scale = 0.0
        self.jump_sums: Dict[int, float] = {j: 0.0 for j in range(1, 2 * self.d + 1)}

    def on_event(self, record: EventRecord, batch: int) -> None:
        f = self.f.value
        change = f(record.post) - f(record.pre)
        self.left += change
        self.scale += abs(change)
        for j in record.fired:
            jump = record.jump(j, f)
            self.right += jump
            self.scale += abs(jump)
            self.jump_sums[j] += jump


class DecompositionReport(BaseModel):
    """Both sides of the simultaneous-count decomposition over one path."""

    test_function: str
    left: float
    right: float
    scale: float
    relative_gap: float
    passed: bool
    left_per_time: float
    right_per_time: float
    jump_sums: Dict[int, float]
    alpha0: float
    alpha_all: float


def check_palm_decomposition(run: SimulationRun, f: TestFunction) -> DecompositionReport:
    """
    Sum of f(X(t)) - f(X(t-)) over epochs against the sum of per-clock jumps
    through the intermediate states. Equal per path up to rounding.
    """
    if not run.record_intermediates:
        raise MissingIntermediates("the run was simulated without intermediate states")
    run.require_data()
    sink = run.collect(DecompositionAccumulator(f, run.d))
    elapsed = run.elapsed
    gap = abs(sink.left - sink.right)
    relative = gap / max(1.0, sink.scale)
    counts = run.counts
    return DecompositionReport(
        test_function=f.name,
        left=sink.left,
        right=sink.right,
        scale=sink.scale,
        relative_gap=relative,
        passed=relative <= settings.IDENTITY_TOLERANCE,
        left_per_time=sink.left / elapsed,
        right_per_time=sink.right / elapsed,
        jump_sums=sink.jump_sums,
        alpha0=sum(counts.epochs) / elapsed,
        alpha_all=sum(counts.multiplicity) / elapsed,
    )


def blocked_arrival_fraction(run: SimulationRun) -> EstimateWithCI:
    """Arrival-Palm probability that an arrival finds the buffer full."""
    if not isinstance(run.model, FiniteQueueModel):
        raise NotApplicable("blocking is defined for finite-queue runs only")
    counts = run.counts
    arrivals = counts.per_batch(1)
    if sum(arrivals) == 0:
        raise InsufficientData("no arrivals after warmup")
    return EstimateWithCI.from_ratio(
        [float(x) for x in counts.blocked], arrivals, count=int(sum(arrivals))
    )


def occupancy_probability(run: SimulationRun, station: int, k: int) -> EstimateWithCI:
    """Time-average probability that L_station = k."""
    run.require_data()
    times = run.occupancy.time_at(station, lambda n: n == k)
    return EstimateWithCI.from_ratio(times, run.batch_elapsed, count=run.events)


def mean_queue_length(run: SimulationRun, station: int) -> EstimateWithCI:
    """Time-average E[L_station]."""
    run.require_data()
    sums = [
        math.fsum(n * t for n, t in batch[station - 1].items()) for batch in run.occupancy.time
    ]
    return EstimateWithCI.from_ratio(sums, run.batch_elapsed, count=run.events)


def time_average_weights(run: SimulationRun, station: int) -> Dict[int, float]:
    """Measured time spent at each queue length of ``station``."""
    occupancy = run.occupancy
    return {
        n: math.fsum(occupancy.time_at(station, lambda m, n=n: m == n))
        for n in occupancy.support(station)
    }


def arrival_weights(run: SimulationRun, station: int) -> Dict[int, float]:
    """Exogenous arrivals at ``station`` counted by the queue length they find."""
    weights: Dict[int, float] = {}
    for batch in run.occupancy.arrival_views:
        for n, c in batch[station - 1].items():
            weights[n] = weights.get(n, 0.0) + c
    return weights


def time_average_law(run: SimulationRun, station: int) -> DiscreteLaw:
    run.require_data()
    return DiscreteLaw.from_weights(time_average_weights(run, station))


def arrival_law(run: SimulationRun, station: int) -> DiscreteLaw:
    """Law of L_station(t-) at exogenous arrival epochs of that station."""
    weights = arrival_weights(run, station)
    if not weights:
        raise InsufficientData(f"no exogenous arrivals at station {station} after warmup")
    return DiscreteLaw.from_weights(weights)


def pasta_distance(run: SimulationRun, station: int = 1) -> float:
    """Total variation between the arrival-Palm and time-average laws of L_station."""
    return total_variation(arrival_law(run, station), time_average_law(run, station))
