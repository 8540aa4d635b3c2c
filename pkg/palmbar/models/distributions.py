"""
Inter-arrival and service time distributions.

Every family exposes closed-form moments, a block sampler and the truncated
exponential moment E[exp(-s (T ^ c))]. The same classes are the config schema:
a document ``{"family": "erlang", "k": 2, "rate": 2.0}`` validates straight
into an ``Erlang``.
"""
import math
from abc import ABC, abstractmethod
from typing import Annotated, Any, Dict, Literal, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, TypeAdapter, ValidationError, model_validator
from scipy import integrate, special, stats

from palmbar.core.config import settings
from palmbar.core.errors import DivergentTransform, InvalidDistribution

_TINY = float(np.finfo(float).tiny)


def _exp(x: float) -> float:
    """exp that saturates to inf instead of raising."""
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _expm1_ratio(k: float, x: float) -> float:
    """(1 - exp(-k x)) / k, continuous at k = 0."""
    if k == 0.0:
        return x
    try:
        return -math.expm1(-k * x) / k
    except OverflowError:
        return math.inf


def _exponential_transform(lam: float, s: float, cutoff: float) -> float:
    k = lam + s
    if math.isinf(cutoff):
        if k <= 0.0:
            raise DivergentTransform(
                f"E[exp(-{s} T)] diverges for an exponential law with rate {lam}"
            )
        return lam / k
    return lam * _expm1_ratio(k, cutoff) + _exp(-k * cutoff)


class DistributionBase(BaseModel, ABC):
    """A positive random variable with closed-form mean and variance."""

    family: str

    class Config:
        """Pydantic config."""
        frozen = True
        extra = "forbid"

    @abstractmethod
    def moments(self) -> Tuple[float, float]:
        """Exact (mean, variance)."""

    @abstractmethod
    def draw(self, generator: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` i.i.d. variates."""

    @abstractmethod
    def scaled(self, factor: float) -> "DistributionBase":
        """Law of ``factor * T``."""

    @abstractmethod
    def _transform(self, s: float, cutoff: float) -> float:
        """E[exp(-s (T ^ cutoff))] for s != 0."""

    @property
    def mean(self) -> float:
        return self.moments()[0]

    @property
    def variance(self) -> float:
        return self.moments()[1]

    @property
    def intensity(self) -> float:
        """Reciprocal mean (lambda for arrivals, mu for services)."""
        return 1.0 / self.mean

    @property
    def is_lattice(self) -> bool:
        """True when the law is not spread out."""
        return False

    def with_mean(self, mean: float) -> "DistributionBase":
        """Same shape rescaled to the given mean."""
        if mean <= 0.0:
            raise InvalidDistribution(f"mean must be positive, got {mean}")
        return self.scaled(mean / self.mean)

    def truncated_exp_moment(self, s: float, cutoff: float = math.inf) -> float:
        """E[exp(-s (T ^ cutoff))]; cutoff may be math.inf."""
        if not cutoff > 0.0:
            raise ValueError(f"cutoff must be positive, got {cutoff}")
        if s == 0.0:
            return 1.0
        return self._transform(s, cutoff)

    def sample_array(self, generator: np.random.Generator, size: int) -> np.ndarray:
        """Draw a block of strictly positive variates."""
        return np.maximum(self.draw(generator, size), _TINY)


class Exponential(DistributionBase):
    """Exponential law with the given rate."""

    family: Literal["exponential"] = "exponential"
    rate: float = Field(gt=0)

    def moments(self) -> Tuple[float, float]:
        return 1.0 / self.rate, 1.0 / self.rate**2

    def draw(self, generator: np.random.Generator, size: int) -> np.ndarray:
        return generator.exponential(1.0 / self.rate, size)

    def scaled(self, factor: float) -> "Exponential":
        return Exponential(rate=self.rate / factor)

    def _transform(self, s: float, cutoff: float) -> float:
        return _exponential_transform(self.rate, s, cutoff)


class Deterministic(DistributionBase):
    """Point mass at ``value``."""

    family: Literal["deterministic"] = "deterministic"
    value: float = Field(gt=0)

    @property
    def is_lattice(self) -> bool:
        return True

    def moments(self) -> Tuple[float, float]:
        return self.value, 0.0

    def draw(self, generator: np.random.Generator, size: int) -> np.ndarray:
        return np.full(size, self.value)

    def scaled(self, factor: float) -> "Deterministic":
        return Deterministic(value=self.value * factor)

    def _transform(self, s: float, cutoff: float) -> float:
        return _exp(-s * min(self.value, cutoff))


class Erlang(DistributionBase):
    """Sum of ``k`` i.i.d. exponentials with the given rate."""

    family: Literal["erlang"] = "erlang"
    k: int = Field(ge=1)
    rate: float = Field(gt=0)

    def moments(self) -> Tuple[float, float]:
        return self.k / self.rate, self.k / self.rate**2

    def draw(self, generator: np.random.Generator, size: int) -> np.ndarray:
        return generator.gamma(self.k, 1.0 / self.rate, size)

    def scaled(self, factor: float) -> "Erlang":
        return Erlang(k=self.k, rate=self.rate / factor)

    def _head(self, a: float, cutoff: float) -> float:
        """(1/(k-1)!) * int_0^cutoff t^(k-1) exp(-a t) dt."""
        k = self.k
        if a > 0.0:
            return float(special.gammainc(k, a * cutoff)) / a**k
        if a == 0.0:
            return cutoff**k / math.factorial(k)
        # all-positive power series of exp(b t), no cancellation
        b = -a
        term = cutoff**k / k
        total = term
        n = 0
        while True:
            term *= b * cutoff * (n + k) / ((n + 1) * (n + k + 1))
            total += term
            n += 1
            if n > b * cutoff and term <= 1e-17 * total:
                break
        return total / math.factorial(k - 1)

    def _transform(self, s: float, cutoff: float) -> float:
        a = self.rate + s
        if math.isinf(cutoff):
            if a <= 0.0:
                raise DivergentTransform(
                    f"E[exp(-{s} T)] diverges for Erlang(k={self.k}, rate={self.rate})"
                )
            return (self.rate / a) ** self.k
        head = self.rate**self.k * self._head(a, cutoff)
        tail = _exp(-s * cutoff) * float(special.gammaincc(self.k, self.rate * cutoff))
        return head + tail


class Hyperexponential2(DistributionBase):
    """Two-phase mixture: rate ``rates[0]`` w.p. ``p``, ``rates[1]`` otherwise."""

    family: Literal["hyperexponential2"] = "hyperexponential2"
    p: float = Field(gt=0, lt=1)
    rates: Tuple[float, float]

    @model_validator(mode="after")
    def check_rates(self) -> "Hyperexponential2":
        if min(self.rates) <= 0.0:
            raise ValueError(f"rates must be positive, got {self.rates}")
        return self

    def moments(self) -> Tuple[float, float]:
        r1, r2 = self.rates
        mean = self.p / r1 + (1.0 - self.p) / r2
        second = 2.0 * self.p / r1**2 + 2.0 * (1.0 - self.p) / r2**2
        return mean, second - mean**2

    def draw(self, generator: np.random.Generator, size: int) -> np.ndarray:
        r1, r2 = self.rates
        phase = generator.random(size) < self.p
        base = generator.standard_exponential(size)
        return np.where(phase, base / r1, base / r2)

    def scaled(self, factor: float) -> "Hyperexponential2":
        r1, r2 = self.rates
        return Hyperexponential2(p=self.p, rates=(r1 / factor, r2 / factor))

    def _transform(self, s: float, cutoff: float) -> float:
        r1, r2 = self.rates
        return self.p * _exponential_transform(r1, s, cutoff) + (
            1.0 - self.p
        ) * _exponential_transform(r2, s, cutoff)


class Uniform(DistributionBase):
    """Uniform law on [lower, upper] with lower > 0."""

    family: Literal["uniform"] = "uniform"
    lower: float = Field(gt=0)
    upper: float

    @model_validator(mode="after")
    def check_bounds(self) -> "Uniform":
        if not self.upper > self.lower:
            raise ValueError(f"upper ({self.upper}) must exceed lower ({self.lower})")
        return self

    def moments(self) -> Tuple[float, float]:
        return 0.5 * (self.lower + self.upper), (self.upper - self.lower) ** 2 / 12.0

    def draw(self, generator: np.random.Generator, size: int) -> np.ndarray:
        return generator.uniform(self.lower, self.upper, size)

    def scaled(self, factor: float) -> "Uniform":
        return Uniform(lower=self.lower * factor, upper=self.upper * factor)

    def _transform(self, s: float, cutoff: float) -> float:
        a, b = self.lower, self.upper
        if cutoff <= a:
            return _exp(-s * cutoff)
        u = min(b, cutoff)
        width = b - a
        head = _exp(-s * a) * _expm1_ratio(s, u - a) / width
        tail = _exp(-s * cutoff) * (b - u) / width if cutoff < b else 0.0
        return head + tail


class LogNormal(DistributionBase):
    """exp(mu + sigma Z) with Z standard normal."""

    family: Literal["lognormal"] = "lognormal"
    mu: float
    sigma: float = Field(gt=0)

    def moments(self) -> Tuple[float, float]:
        mean = math.exp(self.mu + 0.5 * self.sigma**2)
        variance = math.expm1(self.sigma**2) * math.exp(2.0 * self.mu + self.sigma**2)
        return mean, variance

    def draw(self, generator: np.random.Generator, size: int) -> np.ndarray:
        return generator.lognormal(self.mu, self.sigma, size)

    def scaled(self, factor: float) -> "LogNormal":
        return LogNormal(mu=self.mu + math.log(factor), sigma=self.sigma)

    def _transform(self, s: float, cutoff: float) -> float:
        if math.isinf(cutoff):
            if s < 0.0:
                raise DivergentTransform("the lognormal law has no exponential moments")
            upper_z = math.inf
        else:
            upper_z = (math.log(cutoff) - self.mu) / self.sigma

        def integrand(z: float) -> float:
            return float(stats.norm.pdf(z)) * _exp(-s * math.exp(self.mu + self.sigma * z))

        head, _ = integrate.quad(
            integrand,
            -math.inf,
            upper_z,
            epsabs=0.01 * settings.QUADRATURE_TOLERANCE,
            epsrel=1e-12,
            limit=200,
        )
        if math.isinf(upper_z):
            return float(head)
        return float(head) + _exp(-s * cutoff) * float(stats.norm.sf(upper_z))


DistributionSpec = Annotated[
    Union[Exponential, Deterministic, Erlang, Hyperexponential2, Uniform, LogNormal],
    Field(discriminator="family"),
]

_adapter: TypeAdapter[Any] = TypeAdapter(DistributionSpec)


def parse_distribution(data: Dict[str, Any]) -> DistributionBase:
    """Validate a ``{"family": ..., **params}`` mapping into a distribution."""
    try:
        dist: DistributionBase = _adapter.validate_python(data)
    except ValidationError as exc:
        raise InvalidDistribution(str(exc)) from exc
    return dist
