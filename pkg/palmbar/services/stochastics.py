"""
Random streams and the sample / moments / transform operations.

Streams are counter-based (Philox) and keyed by ``(seed, stream_id, path)``
through ``numpy.random.SeedSequence`` spawn keys, so a stream's output does
not depend on which other streams exist or in which process it runs.
"""
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from palmbar.core.config import settings
from palmbar.models.distributions import DistributionBase

logger = logging.getLogger(__name__)

# sub-stream roles inside one replication
ARRIVAL = 1
SERVICE = 2
ROUTING = 3
AUXILIARY = 9


class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``."""

    def __init__(self, seed: int, stream_id: int = 0, path: Tuple[int, ...] = ()):
        if seed < 0 or stream_id < 0 or any(part < 0 for part in path):
            raise ValueError("seed, stream_id and path entries must be non-negative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.path = tuple(int(part) for part in path)
        self._generator: Optional[np.random.Generator] = None
        self._children: Dict[Tuple[int, ...], "RngStream"] = {}

    @property
    def key(self) -> Tuple[int, ...]:
        return (self.seed, self.stream_id) + self.path

    @property
    def generator(self) -> np.random.Generator:
        if self._generator is None:
            sequence = np.random.SeedSequence(
                entropy=self.seed, spawn_key=(self.stream_id,) + self.path
            )
            self._generator = np.random.Generator(np.random.Philox(sequence))
        return self._generator

    def child(self, *key: int) -> "RngStream":
        """Dedicated sub-stream; the same key returns the same (stateful) stream."""
        stream = self._children.get(key)
        if stream is None:
            stream = RngStream(self.seed, self.stream_id, self.path + tuple(key))
            self._children[key] = stream
        return stream

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, path={self.path})"


def replication_streams(seed: int, count: int) -> List[RngStream]:
    """One independent stream per replication, ``stream_id`` = replication index."""
    return [RngStream(seed, stream_id) for stream_id in range(count)]


class VariateSource:
    """Buffered draws of one distribution (or of U(0,1) when ``dist`` is None)."""

    def __init__(
        self,
        stream: RngStream,
        dist: Optional[DistributionBase] = None,
        block: Optional[int] = None,
    ):
        self.stream = stream
        self.dist = dist
        self.block = block or settings.VARIATE_BLOCK
        self._buffer: List[float] = []
        self._position = 0

    def _refill(self) -> None:
        generator = self.stream.generator
        if self.dist is None:
            values = generator.random(self.block)
        else:
            values = self.dist.sample_array(generator, self.block)
        self._buffer = values.tolist()
        self._position = 0

    def __call__(self) -> float:
        if self._position == len(self._buffer):
            self._refill()
        value = self._buffer[self._position]
        self._position += 1
        return value


def sample(dist: DistributionBase, rng: RngStream) -> float:
    """Draw one variate from ``dist`` on ``rng``; advances the stream."""
    return float(dist.sample_array(rng.generator, 1)[0])


def moments(dist: DistributionBase) -> Tuple[float, float]:
    """Exact (mean, variance)."""
    return dist.moments()


def truncated_exp_moment(dist: DistributionBase, s: float, cutoff: float) -> float:
    """E[exp(-s (T ^ cutoff))], cutoff may be math.inf."""
    return dist.truncated_exp_moment(s, cutoff)
