"""
Piecewise-deterministic event engine for generalized Jackson networks and
GI/G/1/ell0 queues.

Between events every running clock decreases at unit rate; the next epoch is
the smallest running residual, and every clock within the tie band of it
fires at the same epoch. Simultaneous firings are applied one clock at a
time (arrivals by station, then completions by station), and each partial
state is kept as an intermediate state of the record.
"""
import logging
import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np

from palmbar.core.config import settings
from palmbar.core.errors import InsufficientData, NegativeQueue, NoActiveClock, UnstableModel
from palmbar.models.network import FiniteQueueModel, NetworkModel
from palmbar.models.state import EventRecord, Mark, SystemState
from palmbar.schemas.config import Horizon
from palmbar.services.accumulators import Accumulator, CountAccumulator, OccupancyAccumulator
from palmbar.services.stochastics import ARRIVAL, ROUTING, SERVICE, RngStream, VariateSource
from palmbar.services.traffic import check_stability

logger = logging.getLogger(__name__)

Model = Union[NetworkModel, FiniteQueueModel]
SinkType = TypeVar("SinkType", bound=Accumulator)


class NetworkEngine:
    """Event-by-event dynamics of one model on one random stream."""

    def __init__(
        self,
        model: Model,
        rng: RngStream,
        *,
        completions_first: bool = False,
        record_intermediates: bool = True,
        tie_tolerance: Optional[float] = None,
    ):
        network = model.as_network()
        d = network.d
        self.model = model
        self.d = d
        self.capacity = model.ell0 if isinstance(model, FiniteQueueModel) else None
        self.record_intermediates = record_intermediates
        self.tie_tolerance = settings.TIE_TOLERANCE if tie_tolerance is None else tie_tolerance

        self.arrival_sources: List[Optional[VariateSource]] = [None] * d
        for i in network.exogenous:
            self.arrival_sources[i] = VariateSource(rng.child(ARRIVAL, i), network.arrival_dist(i))
        self.service_sources = [
            VariateSource(rng.child(SERVICE, i), network.service_dist(i)) for i in range(d)
        ]

        self.routing_rows: List[Optional[List[float]]] = []
        self.routing_sources: List[Optional[VariateSource]] = []
        routing = network.routing_matrix
        for i in range(d):
            if routing[i].sum() > 0.0:
                self.routing_rows.append(np.cumsum(routing[i]).tolist())
                self.routing_sources.append(VariateSource(rng.child(ROUTING, i)))
            else:
                self.routing_rows.append(None)
                self.routing_sources.append(None)

        arrivals = tuple(range(1, d + 1))
        services = tuple(range(d + 1, 2 * d + 1))
        self.order = services + arrivals if completions_first else arrivals + services

    def initial_state(self) -> SystemState:
        """Empty queues, fresh arrival clocks, fresh (frozen) service clocks."""
        return SystemState(
            L=(0,) * self.d,
            R_e=tuple(source() if source is not None else None for source in self.arrival_sources),
            R_s=tuple(source() for source in self.service_sources),
        )

    def _route(self, i: int) -> int:
        row = self.routing_rows[i]
        source = self.routing_sources[i]
        if row is None or source is None:
            return 0
        k = bisect_right(row, source())
        return k + 1 if k < self.d else 0

    def step(self, state: SystemState, t: float = 0.0, n: int = 1) -> EventRecord:
        """Advance to the next epoch after time ``t`` and apply every clock firing there."""
        d = self.d
        L = state.L
        running: List[Tuple[int, float]] = [
            (i + 1, r) for i, r in enumerate(state.R_e) if r is not None
        ]
        running.extend((d + i + 1, r) for i, r in enumerate(state.R_s) if L[i] >= 1)
        if not running:
            raise NoActiveClock(f"no running clock at t={t}")

        delta = max(min(r for _, r in running), 0.0)
        t_event = t + delta
        band = self.tie_tolerance * max(1.0, t_event)
        fired = tuple(sorted(j for j, r in running if r - delta <= band))
        fired_set = frozenset(fired)

        R_e = [
            None if r is None else (0.0 if i + 1 in fired_set else r - delta)
            for i, r in enumerate(state.R_e)
        ]
        R_s = [
            (0.0 if d + i + 1 in fired_set else r - delta) if L[i] >= 1 else r
            for i, r in enumerate(state.R_s)
        ]
        pre = SystemState(L=L, R_e=tuple(R_e), R_s=tuple(R_s))

        queue = list(L)
        marks: List[Mark] = []
        intermediates: Optional[List[SystemState]] = [pre] if self.record_intermediates else None
        for j in self.order:
            if j in fired_set:
                if j <= d:
                    i = j - 1
                    source = self.arrival_sources[i]
                    assert source is not None
                    blocked = self.capacity is not None and L[i] >= self.capacity
                    sample = source()
                    R_e[i] = sample
                    if not blocked:
                        queue[i] += 1
                    marks.append(Mark(clock=j, sample=sample, blocked=blocked))
                else:
                    i = j - d - 1
                    if queue[i] < 1:
                        raise NegativeQueue(f"completion at empty station {i + 1} (event {n})")
                    queue[i] -= 1
                    destination = self._route(i)
                    if destination:
                        queue[destination - 1] += 1
                    sample = self.service_sources[i]()
                    R_s[i] = sample
                    marks.append(Mark(clock=j, sample=sample, destination=destination))
                if intermediates is not None:
                    intermediates.append(SystemState(tuple(queue), tuple(R_e), tuple(R_s)))
            elif intermediates is not None:
                intermediates.append(intermediates[-1])

        if min(queue) < 0:
            raise NegativeQueue(f"negative queue {queue} after event {n}")
        if intermediates is not None:
            post = intermediates[-1]
        else:
            post = SystemState(tuple(queue), tuple(R_e), tuple(R_s))
        marks.sort(key=lambda mark: mark.clock)
        return EventRecord(
            n=n,
            t=t_event,
            pre=pre,
            post=post,
            fired=fired,
            marks=tuple(marks),
            order=self.order,
            intermediates=tuple(intermediates) if intermediates is not None else None,
        )


def step(
    state: SystemState,
    model: Model,
    rng: RngStream,
    t: float = 0.0,
    n: int = 1,
    completions_first: bool = False,
) -> EventRecord:
    """
    One event from ``state``; draws come from the dedicated sub-streams of ``rng``.

    Builds a fresh engine on every call, so buffered variates are discarded
    between calls. Drive a ``NetworkEngine`` directly to generate a path.
    """
    return NetworkEngine(model, rng, completions_first=completions_first).step(state, t, n)


class LogEntry(NamedTuple):
    """A measured segment (``record`` None) or a measured event."""

    state: SystemState
    duration: float
    record: Optional[EventRecord]
    batch: int


@dataclass
class SimulationRun:
    """Measured window of one simulated path and its accumulators."""

    model: Model
    rng_key: Tuple[int, ...]
    horizon: Horizon
    warmup: float
    events_total: int
    warmup_events: int
    start_time: float
    start_state: SystemState
    end_time: float
    end_state: SystemState
    batch_elapsed: List[float]
    batch_events: List[int]
    record_intermediates: bool
    sinks: Dict[str, Accumulator]
    log: Optional[List[LogEntry]] = None

    @property
    def d(self) -> int:
        return self.model.d

    @property
    def elapsed(self) -> float:
        return math.fsum(self.batch_elapsed)

    @property
    def events(self) -> int:
        return sum(self.batch_events)

    @property
    def batches(self) -> int:
        return len(self.batch_elapsed)

    @property
    def counts(self) -> CountAccumulator:
        sink = self.sinks["counts"]
        assert isinstance(sink, CountAccumulator)
        return sink

    @property
    def occupancy(self) -> OccupancyAccumulator:
        sink = self.sinks["occupancy"]
        assert isinstance(sink, OccupancyAccumulator)
        return sink

    def require_data(self) -> None:
        if self.events == 0 and self.elapsed == 0.0:
            raise InsufficientData("the run has no post-warmup data")

    def collect(self, sink: SinkType) -> SinkType:
        """The run's accumulator with ``sink.key``, or ``sink`` filled by replaying the log."""
        existing = self.sinks.get(sink.key)
        if existing is not None:
            return existing  # type: ignore[return-value]
        if self.log is None:
            raise InsufficientData(
                f"no accumulator '{sink.key}' was attached and the run kept no event log"
            )
        sink.bind(self.batches)
        for entry in self.log:
            if entry.record is None:
                sink.on_segment(entry.state, entry.duration, entry.batch)
            else:
                sink.on_event(entry.record, entry.batch)
        self.sinks[sink.key] = sink
        return sink

    def records(self) -> List[EventRecord]:
        if self.log is None:
            raise InsufficientData("the run kept no event log")
        return [entry.record for entry in self.log if entry.record is not None]


class _Recorder:
    """Routes measured segments and events to sinks, batch registers and the log."""

    def __init__(self, sinks: Sequence[Accumulator], batches: int, keep_log: bool):
        self.sinks = list(sinks)
        self.batch_elapsed = [0.0] * batches
        self.batch_events = [0] * batches
        self.log: Optional[List[LogEntry]] = [] if keep_log else None
        for sink in self.sinks:
            sink.bind(batches)

    def segment(self, state: SystemState, duration: float, batch: int) -> None:
        if duration <= 0.0:
            return
        self.batch_elapsed[batch] += duration
        for sink in self.sinks:
            sink.on_segment(state, duration, batch)
        if self.log is not None:
            self.log.append(LogEntry(state, duration, None, batch))

    def event(self, record: EventRecord, batch: int) -> None:
        self.batch_events[batch] += 1
        for sink in self.sinks:
            sink.on_event(record, batch)
        if self.log is not None:
            self.log.append(LogEntry(record.post, 0.0, record, batch))


def _check_model(model: Model, allow_unstable: bool) -> None:
    if isinstance(model, NetworkModel):
        verdict = check_stability(model)
        if not verdict.stable:
            if not allow_unstable:
                raise UnstableModel(verdict.unstable)
            logger.warning("simulating unstable stations %s on request", verdict.unstable)
        arrivals = model.arrivals.values()
    else:
        arrivals = [model.arrival]
    if any(dist.is_lattice for dist in arrivals):
        logger.warning("deterministic arrival laws are not spread out; ties are expected")


def simulate(
    model: Model,
    horizon: Union[Horizon, int],
    rng: RngStream,
    warmup: Optional[float] = None,
    sinks: Sequence[Accumulator] = (),
    *,
    allow_unstable: bool = False,
    record_intermediates: bool = True,
    completions_first: bool = False,
    keep_log: bool = False,
    batches: Optional[int] = None,
) -> SimulationRun:
    """
    Simulate ``model`` from the empty state.

    With an event horizon the first ``floor(warmup * events)`` events are
    discarded and measured events are split into equal batches by index; an
    optional time cap ends the run early. With a time horizon the window
    ``[warmup * time, time]`` is measured and split into equal time batches.
    """
    if isinstance(horizon, int):
        horizon = Horizon(events=horizon)
    warmup = settings.DEFAULT_WARMUP if warmup is None else warmup
    if not 0.0 <= warmup <= 1.0:
        raise ValueError(f"warmup must lie in [0, 1], got {warmup}")
    batches = batches or settings.BATCH_COUNT
    _check_model(model, allow_unstable)

    engine = NetworkEngine(
        model,
        rng,
        completions_first=completions_first,
        record_intermediates=record_intermediates,
    )
    d = engine.d
    builtin: List[Accumulator] = [CountAccumulator(d), OccupancyAccumulator(d)]
    recorder = _Recorder([*builtin, *sinks], batches, keep_log)
    logger.info(
        "simulating %s d=%d horizon=%s warmup=%.3g stream=%s",
        model.kind,
        d,
        horizon.model_dump(exclude_none=True),
        warmup,
        rng.key,
    )

    state = engine.initial_state()
    if horizon.events is not None:
        window = _run_events(engine, state, horizon, warmup, batches, recorder)
    else:
        window = _run_time(engine, state, horizon, warmup, batches, recorder)
    events_total, warmup_events, start_time, start_state, end_time, end_state = window

    run = SimulationRun(
        model=model,
        rng_key=rng.key,
        horizon=horizon,
        warmup=warmup,
        events_total=events_total,
        warmup_events=warmup_events,
        start_time=start_time,
        start_state=start_state,
        end_time=end_time,
        end_state=end_state,
        batch_elapsed=recorder.batch_elapsed,
        batch_events=recorder.batch_events,
        record_intermediates=record_intermediates,
        sinks={sink.key: sink for sink in recorder.sinks},
        log=recorder.log,
    )
    logger.info(
        "finished: %d events (%d measured) over %.6g time units",
        events_total,
        run.events,
        run.elapsed,
    )
    return run


_Window = Tuple[int, int, float, SystemState, float, SystemState]


def _run_events(
    engine: NetworkEngine,
    state: SystemState,
    horizon: Horizon,
    warmup: float,
    batches: int,
    recorder: _Recorder,
) -> _Window:
    total = horizon.events or 0
    time_cap = horizon.time
    n_warm = int(math.floor(warmup * total))
    measured = total - n_warm
    t = 0.0
    n = 0
    start_time, start_state = t, state
    while n < total:
        record = engine.step(state, t, n + 1)
        if time_cap is not None and record.t > time_cap:
            if n >= n_warm and measured > 0:
                batch = min(((n - n_warm) * batches) // measured, batches - 1)
                recorder.segment(state, time_cap - t, batch)
            state, t = state.advanced(time_cap - t), time_cap
            break
        n += 1
        if n > n_warm:
            batch = ((n - n_warm - 1) * batches) // measured
            recorder.segment(state, record.t - t, batch)
            recorder.event(record, batch)
        state, t = record.post, record.t
        if n == n_warm:
            start_time, start_state = t, state
    return n, min(n, n_warm), start_time, start_state, t, state


def _run_time(
    engine: NetworkEngine,
    state: SystemState,
    horizon: Horizon,
    warmup: float,
    batches: int,
    recorder: _Recorder,
) -> _Window:
    end = horizon.time or 0.0
    t_warm = warmup * end
    span = end - t_warm
    boundaries = [t_warm + k * span / batches for k in range(1, batches)]

    def batch_of(s: float) -> int:
        return bisect_right(boundaries, s)

    t = 0.0
    n = 0
    n_warm = 0
    start_time, start_state = t_warm, state
    started = t_warm <= 0.0
    while True:
        try:
            record = engine.step(state, t, n + 1)
            next_t = record.t
        except NoActiveClock:
            record, next_t = None, math.inf
        if not started and next_t >= t_warm:
            start_state = state.advanced(t_warm - t)
            started = True
        seg_end = min(next_t, end)
        s = max(t, t_warm)
        batch = batch_of(s)
        while s < seg_end:
            cut = boundaries[batch] if batch < len(boundaries) else seg_end
            piece_end = min(cut, seg_end)
            if piece_end > s:
                recorder.segment(state.advanced(s - t), piece_end - s, batch)
                s = piece_end
            batch += 1
        if record is None or next_t > end:
            return n, n_warm, start_time, start_state, end, state.advanced(end - t)
        n += 1
        if next_t >= t_warm and span > 0.0:
            recorder.event(record, min(batch_of(next_t), batches - 1))
        else:
            n_warm = n
        state, t = record.post, record.t
