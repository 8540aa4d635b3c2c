"""
Online accumulators fed by the engine.

A sink receives every post-warmup inter-event segment and every post-warmup
event together with its batch index. Every run carries a ``CountAccumulator``
and an ``OccupancyAccumulator``; estimators look further sinks up by ``key``.
"""
from abc import ABC, abstractmethod
from collections import defaultdict
from typing import Callable, DefaultDict, List, Optional, Set

from palmbar.models.state import EventRecord, SystemState


class Accumulator(ABC):
    """Base class for engine sinks."""

    @property
    @abstractmethod
    def key(self) -> str:
        """Lookup key on the run."""

    def bind(self, batches: int) -> None:
        """Allocate per-batch registers; called once before the run starts."""
        self.batches = batches

    def on_segment(self, state: SystemState, duration: float, batch: int) -> None:
        """Drift segment of length ``duration`` starting at ``state``."""

    def on_event(self, record: EventRecord, batch: int) -> None:
        """One event epoch."""


class CountAccumulator(Accumulator):
    """Per-batch firing counts of every clock, of N0 and of N_all."""

    def __init__(self, d: int):
        self.d = d

    @property
    def key(self) -> str:
        return "counts"

    def bind(self, batches: int) -> None:
        super().bind(batches)
        self.clock_counts = [[0] * (2 * self.d) for _ in range(batches)]
        self.epochs = [0] * batches
        self.multiplicity = [0] * batches
        self.blocked = [0] * batches

    def on_event(self, record: EventRecord, batch: int) -> None:
        counts = self.clock_counts[batch]
        for j in record.fired:
            counts[j - 1] += 1
        self.epochs[batch] += 1
        self.multiplicity[batch] += len(record.fired)
        for mark in record.marks:
            if mark.blocked:
                self.blocked[batch] += 1

    def per_batch(self, j: int) -> List[float]:
        return [float(counts[j - 1]) for counts in self.clock_counts]

    def total(self, j: int) -> int:
        return sum(counts[j - 1] for counts in self.clock_counts)


class OccupancyAccumulator(Accumulator):
    """Time spent at each queue length and queue lengths seen by exogenous arrivals."""

    def __init__(self, d: int):
        self.d = d

    @property
    def key(self) -> str:
        return "occupancy"

    def bind(self, batches: int) -> None:
        super().bind(batches)
        self.time: List[List[DefaultDict[int, float]]] = [
            [defaultdict(float) for _ in range(self.d)] for _ in range(batches)
        ]
        self.arrival_views: List[List[DefaultDict[int, int]]] = [
            [defaultdict(int) for _ in range(self.d)] for _ in range(batches)
        ]

    def on_segment(self, state: SystemState, duration: float, batch: int) -> None:
        registers = self.time[batch]
        for i, n in enumerate(state.L):
            registers[i][n] += duration

    def on_event(self, record: EventRecord, batch: int) -> None:
        views = self.arrival_views[batch]
        for j in record.fired:
            if j > self.d:
                break
            views[j - 1][record.pre.L[j - 1]] += 1

    def support(self, station: int) -> List[int]:
        values: Set[int] = set()
        for batch in self.time:
            values.update(batch[station - 1])
        return sorted(values)

    def time_at(self, station: int, predicate: Callable[[int], bool]) -> List[float]:
        """Per-batch time with ``predicate(L_station)`` true."""
        return [
            sum(t for n, t in batch[station - 1].items() if predicate(n)) for batch in self.time
        ]


class ServiceSampleAccumulator(Accumulator):
    """Service times drawn at completion epochs of one station."""

    def __init__(self, d: int, station: int, limit: Optional[int] = None):
        self.clock = d + station
        self.station = station
        self.limit = limit
        self.samples: List[float] = []

    @property
    def key(self) -> str:
        return f"service-samples:{self.station}"

    def on_event(self, record: EventRecord, batch: int) -> None:
        if self.limit is not None and len(self.samples) >= self.limit:
            return
        mark = record.mark(self.clock)
        if mark is not None:
            self.samples.append(mark.sample)
