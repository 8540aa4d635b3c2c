"""
Test distributions and random streams.
"""
import math

import numpy as np
import pytest

from palmbar.core.errors import DivergentTransform, InvalidDistribution
from palmbar.models.distributions import (
    Deterministic,
    Erlang,
    Exponential,
    Hyperexponential2,
    LogNormal,
    Uniform,
    parse_distribution,
)
from palmbar.services.stochastics import (
    RngStream,
    VariateSource,
    moments,
    replication_streams,
    sample,
    truncated_exp_moment,
)


def test_same_key_same_draws():
    """Streams with the same key reproduce their draws."""
    first = RngStream(7).child(2, 0).generator.random(5)
    second = RngStream(7).child(2, 0).generator.random(5)
    assert np.array_equal(first, second)


def test_distinct_keys_differ():
    """Sibling sub-streams and replication streams are distinct."""
    base = RngStream(7)
    assert not np.array_equal(base.child(1, 0).generator.random(5), base.child(1, 1).generator.random(5))
    streams = replication_streams(7, 3)
    assert [s.key for s in streams] == [(7, 0), (7, 1), (7, 2)]
    assert not np.array_equal(streams[0].generator.random(3), streams[1].generator.random(3))


def test_child_is_cached():
    """Asking for the same child twice returns the same stateful stream."""
    base = RngStream(1)
    assert base.child(3, 1) is base.child(3, 1)


def test_negative_seed_rejected():
    """Seeds and stream ids are non-negative."""
    with pytest.raises(ValueError):
        RngStream(-1)


def test_variate_source_buffers_reproducibly():
    """A buffered source matches a fresh one and draws positive variates."""
    dist = Erlang(k=2, rate=3.0)
    a = VariateSource(RngStream(5).child(1, 0), dist, block=16)
    b = VariateSource(RngStream(5).child(1, 0), dist, block=16)
    draws = [a() for _ in range(40)]
    assert draws == [b() for _ in range(40)]
    assert all(x > 0.0 for x in draws)


def test_uniform_source():
    """Without a distribution the source yields U(0, 1)."""
    source = VariateSource(RngStream(5).child(3, 0))
    draws = [source() for _ in range(1000)]
    assert all(0.0 <= u < 1.0 for u in draws)


@pytest.mark.parametrize(
    "dist, mean, variance",
    [
        (Exponential(rate=2.0), 0.5, 0.25),
        (Deterministic(value=1.5), 1.5, 0.0),
        (Erlang(k=3, rate=3.0), 1.0, 1.0 / 3.0),
        (Uniform(lower=0.2, upper=0.8), 0.5, 0.03),
        (Hyperexponential2(p=0.5, rates=(1.0, 3.0)), 2.0 / 3.0, 2.0 / 3.0),
    ],
)
def test_moments(dist, mean, variance):
    """Closed-form moments."""
    m, v = moments(dist)
    assert m == pytest.approx(mean)
    assert v == pytest.approx(variance)


def test_sample_mean():
    """Sample means agree with the exact means."""
    rng = RngStream(11)
    for dist in (Erlang(k=3, rate=3.0), Uniform(lower=0.2, upper=0.8), LogNormal(mu=0.0, sigma=0.5)):
        draws = dist.sample_array(rng.child(9, 0).generator, 100_000)
        assert draws.mean() == pytest.approx(dist.mean, rel=0.02)
    assert sample(Deterministic(value=2.0), rng) == 2.0


def test_exponential_transform():
    """E[exp(-s T)] = lam / (lam + s) without truncation."""
    assert truncated_exp_moment(Exponential(rate=2.0), 1.0, math.inf) == pytest.approx(2.0 / 3.0)


def test_truncated_exponential_transform():
    """Truncation adds the atom at the cutoff."""
    lam, s, c = 2.0, 1.0, 0.7
    k = lam + s
    expected = lam / k * (1.0 - math.exp(-k * c)) + math.exp(-k * c)
    assert truncated_exp_moment(Exponential(rate=lam), s, c) == pytest.approx(expected, rel=1e-12)


def test_deterministic_transform():
    """A deterministic time is capped by the cutoff."""
    assert Deterministic(value=1.0).truncated_exp_moment(1.0, cutoff=0.5) == pytest.approx(math.exp(-0.5))
    assert Deterministic(value=1.0).truncated_exp_moment(0.0) == 1.0


def test_transform_matches_monte_carlo():
    """Closed forms agree with sample averages of exp(-s (T ^ c))."""
    generator = RngStream(3).child(9, 1).generator
    for dist in (Erlang(k=2, rate=2.0), Uniform(lower=0.2, upper=0.8), Hyperexponential2(p=0.3, rates=(1.0, 4.0))):
        draws = dist.sample_array(generator, 200_000)
        estimate = np.exp(-0.8 * np.minimum(draws, 0.9)).mean()
        assert dist.truncated_exp_moment(0.8, 0.9) == pytest.approx(estimate, rel=5e-3)


def test_divergent_transform():
    """The untruncated transform diverges for s <= -lam."""
    with pytest.raises(DivergentTransform):
        Exponential(rate=1.0).truncated_exp_moment(-1.5)


def test_with_mean():
    """Rescaling keeps the shape and sets the mean."""
    dist = Erlang(k=4, rate=1.0).with_mean(0.5)
    assert dist.mean == pytest.approx(0.5)
    assert dist.k == 4


def test_lattice_flag():
    """Only the deterministic law is lattice."""
    assert Deterministic(value=1.0).is_lattice
    assert not Exponential(rate=1.0).is_lattice


def test_parse_distribution():
    """Documents validate into the matching family; bad parameters raise."""
    dist = parse_distribution({"family": "erlang", "k": 2, "rate": 2.0})
    assert isinstance(dist, Erlang)
    with pytest.raises(InvalidDistribution):
        parse_distribution({"family": "exponential", "rate": -1.0})
    with pytest.raises(InvalidDistribution):
        parse_distribution({"family": "pareto", "alpha": 2.0})


MONOTONE_LAWS = [
    Exponential(rate=1.0),
    Erlang(k=2, rate=2.0),
    Uniform(lower=0.2, upper=0.8),
    Hyperexponential2(p=0.3, rates=(1.0, 4.0)),
    Deterministic(value=1.0),
]


@pytest.mark.parametrize("dist", MONOTONE_LAWS, ids=lambda dist: dist.family)
def test_transform_monotone(dist):
    """E[exp(-s (T ^ c))] falls in s; in c it falls for s > 0 and rises for s < 0."""
    cutoffs = [0.3, 0.9, 2.0, math.inf]
    for c in cutoffs:
        values = [truncated_exp_moment(dist, s, c) for s in (-0.5, 0.0, 0.5, 1.0, 2.0)]
        assert all(a >= b * (1.0 - 1e-12) for a, b in zip(values, values[1:]))
    for s, sign in ((0.8, 1.0), (-0.5, -1.0)):
        values = [sign * truncated_exp_moment(dist, s, c) for c in cutoffs]
        assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))
