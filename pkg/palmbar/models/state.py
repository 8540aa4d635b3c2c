"""
System state X(t) = (L, R_e, R_s) and event records.

Clocks are numbered 1..2d: clock j <= d is the exogenous arrival clock of
station j, clock d + i is the service clock of station i.
"""
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

from palmbar.core.errors import MissingIntermediates


@dataclass(frozen=True)
class SystemState:
    """Queue lengths plus residual arrival and service times."""

    L: Tuple[int, ...]
    R_e: Tuple[Optional[float], ...]
    R_s: Tuple[float, ...]

    @property
    def d(self) -> int:
        return len(self.L)

    def clock(self, j: int) -> Optional[float]:
        d = self.d
        if j <= d:
            return self.R_e[j - 1]
        return self.R_s[j - d - 1]

    def is_running(self, j: int) -> bool:
        """Arrival clocks run when present, service clocks when the station is busy."""
        d = self.d
        if j <= d:
            return self.R_e[j - 1] is not None
        return self.L[j - d - 1] >= 1

    def advanced(self, dt: float) -> "SystemState":
        """State after ``dt`` time units of drift with no event in between."""
        if dt == 0.0:
            return self
        return SystemState(
            L=self.L,
            R_e=tuple(None if r is None else r - dt for r in self.R_e),
            R_s=tuple(r - dt if n >= 1 else r for r, n in zip(self.R_s, self.L)),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {"L": list(self.L), "R_e": list(self.R_e), "R_s": list(self.R_s)}


@dataclass(frozen=True)
class Mark:
    """Random marks drawn when clock ``clock`` fires."""

    clock: int
    sample: float
    destination: Optional[int] = None  # services only: 1-based station, 0 = exit
    blocked: bool = False


@dataclass(frozen=True)
class EventRecord:
    """One epoch of the superposed process N0."""

    n: int
    t: float
    pre: SystemState
    post: SystemState
    fired: Tuple[int, ...]
    marks: Tuple[Mark, ...]
    order: Tuple[int, ...]
    intermediates: Optional[Tuple[SystemState, ...]] = field(default=None, repr=False)

    @property
    def multiplicity(self) -> int:
        return len(self.fired)

    @property
    def fired_mask(self) -> int:
        mask = 0
        for j in self.fired:
            mask |= 1 << (j - 1)
        return mask

    def fires(self, j: int) -> bool:
        return j in self.fired

    def mark(self, j: int) -> Optional[Mark]:
        for mark in self.marks:
            if mark.clock == j:
                return mark
        return None

    def intermediate(self, k: int) -> SystemState:
        """Y_k: the state after the first k clocks of ``order`` were applied."""
        if self.intermediates is None:
            raise MissingIntermediates(f"event {self.n} was recorded without intermediate states")
        return self.intermediates[k]

    def jump(self, j: int, f: Callable[[SystemState], float]) -> float:
        """Delta_j f = f(Y_j) - f(Y_{j-1}); zero when j did not fire."""
        if not self.fires(j):
            return 0.0
        if self.intermediates is None:
            if len(self.fired) == 1:
                return f(self.post) - f(self.pre)
            raise MissingIntermediates(
                f"event {self.n} fired {self.fired} and has no intermediate states"
            )
        k = self.order.index(j) + 1
        return f(self.intermediates[k]) - f(self.intermediates[k - 1])

    def summary(self) -> List[Any]:
        """Event-log row: n, t, fired bitmask, pre L, post L."""
        return [self.n, self.t, self.fired_mask, list(self.pre.L), list(self.post.L)]
