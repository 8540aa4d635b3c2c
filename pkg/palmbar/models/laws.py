"""
Discrete laws on queue lengths.
"""
import math
from typing import Dict, List, Mapping

from pydantic import BaseModel, model_validator

from palmbar.core.config import settings


class DiscreteLaw(BaseModel):
    """A probability vector on integer states."""

    support: List[int]
    probs: List[float]

    class Config:
        """Pydantic config."""
        frozen = True

    @model_validator(mode="after")
    def check_probs(self) -> "DiscreteLaw":
        if len(self.support) != len(self.probs):
            raise ValueError("support and probs differ in length")
        if any(p < 0.0 for p in self.probs):
            raise ValueError("probabilities must be non-negative")
        total = math.fsum(self.probs)
        if abs(total - 1.0) > settings.NORMALIZATION_TOLERANCE * max(1, len(self.probs)):
            raise ValueError(f"probabilities sum to {total}, not 1")
        return self

    @classmethod
    def from_weights(cls, weights: Mapping[int, float]) -> "DiscreteLaw":
        """Normalize non-negative weights."""
        total = math.fsum(weights.values())
        if total <= 0.0:
            raise ValueError("weights carry no mass")
        support = sorted(weights)
        return cls(support=support, probs=[weights[k] / total for k in support])

    def as_dict(self) -> Dict[int, float]:
        return dict(zip(self.support, self.probs))

    def pmf(self, k: int) -> float:
        return self.as_dict().get(k, 0.0)

    def cdf(self, x: float) -> float:
        return math.fsum(p for k, p in zip(self.support, self.probs) if k <= x)

    def mean(self) -> float:
        return math.fsum(k * p for k, p in zip(self.support, self.probs))


def total_variation(first: DiscreteLaw, second: DiscreteLaw) -> float:
    """Half the L1 distance over the union of supports."""
    p, q = first.as_dict(), second.as_dict()
    states = set(p) | set(q)
    return 0.5 * math.fsum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in states)
