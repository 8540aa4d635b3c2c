"""
Exception hierarchy.
"""
from typing import Optional, Sequence, Union


class PalmBarError(Exception):
    """Base class for every error raised by the toolkit."""


class InvalidDistribution(PalmBarError, ValueError):
    """Distribution parameters violate the family invariants."""


class DivergentTransform(PalmBarError):
    """E[exp(-s T)] is infinite for the requested s with no truncation."""


class SingularRouting(PalmBarError):
    """Routing matrix has spectral radius too close to (or above) one."""


class UnstableModel(PalmBarError):
    """Network has a station with traffic intensity >= 1."""

    def __init__(self, stations: Sequence[int]):
        self.stations = list(stations)
        super().__init__(f"unstable stations {self.stations} (rho >= 1)")


class NegativeQueue(PalmBarError):
    """A queue length went negative. Signals an engine logic fault."""


class NoActiveClock(PalmBarError):
    """No clock is running, so the next event time is undefined."""


class InsufficientData(PalmBarError):
    """An estimator was queried with no (or too little) post-warmup data."""


class MissingIntermediates(PalmBarError):
    """Intermediate states were not recorded for this run."""


class NoRoot(PalmBarError):
    """A boundary equation has no root in the admissible range."""


class ZeroVariance(PalmBarError):
    """Both limiting variances vanish while the drift parameter does not."""


class NotApplicable(PalmBarError):
    """An oracle was asked about a model it does not cover."""


class UnboundedTestFunction(PalmBarError):
    """A test function produced non-finite or exploding path sums."""


class ConfigError(PalmBarError):
    """Experiment document failed to parse or validate."""

    def __init__(
        self,
        message: str,
        field: Optional[Sequence[Union[str, int]]] = None,
        line: Optional[int] = None,
    ):
        self.field = tuple(field) if field else ()
        self.line = line
        location = ""
        if self.field:
            location += " at " + ".".join(str(part) for part in self.field)
        if line is not None:
            location += f" (line {line})"
        super().__init__(f"{message}{location}")
