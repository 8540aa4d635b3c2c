"""
Network and finite-queue models.

Stations are numbered 1..d in documents and reports; internal arrays are
0-based. Station i has an exogenous arrival stream iff ``arrivals`` has key i.
"""
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from palmbar.models.distributions import DistributionBase, DistributionSpec

_ROW_SLACK = 1e-12


class NetworkModel(BaseModel):
    """Generalized Jackson network: renewal inputs, i.i.d. services, Markov routing."""

    kind: Literal["network"] = "network"
    d: int = Field(ge=1)
    arrivals: Dict[int, DistributionSpec] = Field(default_factory=dict)
    services: List[DistributionSpec]
    routing: Optional[List[List[float]]] = None

    class Config:
        """Pydantic config."""
        frozen = True
        extra = "forbid"

    @model_validator(mode="after")
    def check_shapes(self) -> "NetworkModel":
        if len(self.services) != self.d:
            raise ValueError(f"expected {self.d} service laws, got {len(self.services)}")
        for station in self.arrivals:
            if not 1 <= station <= self.d:
                raise ValueError(f"arrival station {station} outside 1..{self.d}")
        if self.routing is not None:
            if len(self.routing) != self.d or any(len(row) != self.d for row in self.routing):
                raise ValueError(f"routing must be a {self.d}x{self.d} matrix")
            for i, row in enumerate(self.routing, start=1):
                if any(p < 0.0 for p in row):
                    raise ValueError(f"routing row {i} has a negative entry")
                if sum(row) > 1.0 + _ROW_SLACK:
                    raise ValueError(f"routing row {i} sums to {sum(row)} > 1")
        return self

    @property
    def exogenous(self) -> Tuple[int, ...]:
        """0-based indices of stations with exogenous arrivals."""
        return tuple(sorted(station - 1 for station in self.arrivals))

    def arrival_dist(self, i: int) -> Optional[DistributionBase]:
        """Arrival law of 0-based station i, None when it has no exogenous input."""
        dist: Optional[DistributionBase] = self.arrivals.get(i + 1)
        return dist

    def service_dist(self, i: int) -> DistributionBase:
        dist: DistributionBase = self.services[i]
        return dist

    @property
    def routing_matrix(self) -> np.ndarray:
        if self.routing is None:
            return np.zeros((self.d, self.d))
        return np.asarray(self.routing, dtype=float)

    @property
    def exit_probabilities(self) -> np.ndarray:
        return np.clip(1.0 - self.routing_matrix.sum(axis=1), 0.0, 1.0)

    @property
    def lam(self) -> np.ndarray:
        """Exogenous rates, 0 at stations without input."""
        rates = np.zeros(self.d)
        for i in self.exogenous:
            rates[i] = self.arrivals[i + 1].intensity
        return rates

    @property
    def mu(self) -> np.ndarray:
        return np.array([dist.intensity for dist in self.services])

    def all_dists(self) -> List[DistributionBase]:
        return [*self.arrivals.values(), *self.services]

    def as_network(self) -> "NetworkModel":
        return self


class FiniteQueueModel(BaseModel):
    """GI/G/1/ell0: an arrival is lost iff it finds ``ell0`` customers."""

    kind: Literal["finite_queue"] = "finite_queue"
    arrival: DistributionSpec
    service: DistributionSpec
    ell0: int = Field(ge=1)

    class Config:
        """Pydantic config."""
        frozen = True
        extra = "forbid"

    @property
    def d(self) -> int:
        return 1

    @property
    def rho(self) -> float:
        return self.service.mean / self.arrival.mean

    def as_network(self) -> NetworkModel:
        """The same station without the buffer limit."""
        return NetworkModel(
            d=1,
            arrivals={1: self.arrival},
            services=[self.service],
            routing=[[0.0]],
        )


class TrafficSolution(BaseModel):
    """Solution of the traffic equation alpha = lam + P^T alpha."""

    alpha: List[float]
    rho: List[float]
    lam: List[float]
    mu: List[float]
    spectral_radius: float

    @property
    def unstable_stations(self) -> List[int]:
        """1-based stations with rho >= 1."""
        return [i + 1 for i, value in enumerate(self.rho) if value >= 1.0]


class StabilityVerdict(BaseModel):
    """Stable iff every station has rho < 1."""

    stable: bool
    unstable: List[int] = Field(default_factory=list)
    rho: List[float]
