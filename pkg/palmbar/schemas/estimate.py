"""
Batch-means estimates.
"""
import math
from typing import Iterable, List, Optional, Sequence, Tuple

from pydantic import BaseModel, Field

from palmbar.core.errors import InsufficientData


class EstimateWithCI(BaseModel):
    """
    Ratio estimate sum(numerators) / sum(denominators) over batches.

    The standard error is the batch-means (delta method) error of the ratio.
    Merging concatenates batches, so merged values do not depend on the
    order in which replications are merged.
    """

    value: float
    stderr: float = Field(ge=0)
    count: int = Field(ge=0)
    numerators: List[float] = Field(default_factory=list, repr=False)
    denominators: List[float] = Field(default_factory=list, repr=False)

    @classmethod
    def from_ratio(
        cls,
        numerators: Sequence[float],
        denominators: Sequence[float],
        count: Optional[int] = None,
    ) -> "EstimateWithCI":
        numerators = [float(x) for x in numerators]
        denominators = [float(x) for x in denominators]
        if len(numerators) != len(denominators):
            raise ValueError("numerator and denominator batches differ in length")
        total = math.fsum(denominators)
        used = sum(1 for den in denominators if den > 0.0)
        if total <= 0.0 or used < 2:
            raise InsufficientData("fewer than two batches carry data")
        value = math.fsum(numerators) / total
        batches = len(numerators)
        mean_den = total / batches
        spread = math.fsum((num - value * den) ** 2 for num, den in zip(numerators, denominators))
        stderr = math.sqrt(spread / (batches * (batches - 1))) / mean_den
        return cls(
            value=value,
            stderr=stderr,
            count=int(total) if count is None else count,
            numerators=numerators,
            denominators=denominators,
        )

    @classmethod
    def exact(cls, value: float, count: int = 0) -> "EstimateWithCI":
        """A deterministic value with zero error."""
        return cls(value=value, stderr=0.0, count=count)

    def pseudo_values(self) -> List[float]:
        """Per-batch values whose mean is ``value`` and whose spread gives ``stderr``."""
        if not self.denominators:
            return []
        mean_den = math.fsum(self.denominators) / len(self.denominators)
        return [
            self.value + (num - self.value * den) / mean_den
            for num, den in zip(self.numerators, self.denominators)
        ]

    @classmethod
    def linear(
        cls, terms: Iterable[Tuple[float, "EstimateWithCI"]], constant: float = 0.0
    ) -> "EstimateWithCI":
        """sum(a * estimate) + constant, with the error of the combined batch influence."""
        terms = list(terms)
        batch_counts = {len(est.numerators) for _, est in terms if est.numerators}
        if len(batch_counts) > 1:
            raise ValueError("cannot combine estimates with different batch counts")
        batches = batch_counts.pop() if batch_counts else 0
        combined = [constant] * batches
        value = constant
        for weight, est in terms:
            value += weight * est.value
            if est.numerators:
                for b, pseudo in enumerate(est.pseudo_values()):
                    combined[b] += weight * pseudo
        if batches < 2:
            return cls.exact(value)
        result = cls.from_ratio(combined, [1.0] * batches, count=min(est.count for _, est in terms))
        return result.model_copy(update={"value": value})

    @classmethod
    def merge(cls, estimates: Sequence["EstimateWithCI"]) -> "EstimateWithCI":
        """Pool replications by concatenating their batches."""
        if not estimates:
            raise InsufficientData("nothing to merge")
        if all(not est.numerators for est in estimates):
            if len({est.value for est in estimates}) != 1:
                raise ValueError("exact estimates disagree")
            return cls.exact(estimates[0].value, sum(est.count for est in estimates))
        numerators = [x for est in estimates for x in est.numerators]
        denominators = [x for est in estimates for x in est.denominators]
        return cls.from_ratio(numerators, denominators, count=sum(est.count for est in estimates))

    def within(self, target: float, k: float = 3.0) -> bool:
        """|value - target| <= k standard errors."""
        return abs(self.value - target) <= k * self.stderr

    def summary(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "count": self.count}
