"""
Test network models, the traffic equation and stability.
"""
import numpy as np
import pytest
from pydantic import ValidationError

from palmbar.core.errors import SingularRouting
from palmbar.models.distributions import Exponential
from palmbar.models.network import FiniteQueueModel, NetworkModel
from palmbar.services.traffic import check_stability, solve_traffic, spectral_radius


def test_tandem_traffic(tandem):
    """Tandem lam = 1, mu = (2, 1.25) gives alpha = (1, 1), rho = (0.5, 0.8)."""
    solution = solve_traffic(tandem)
    assert solution.alpha == pytest.approx([1.0, 1.0])
    assert solution.rho == pytest.approx([0.5, 0.8])
    assert solution.spectral_radius == pytest.approx(0.0, abs=1e-9)


def test_feedback_traffic(feedback):
    """Feedback 1/2 doubles the effective arrival rate."""
    solution = solve_traffic(feedback)
    assert solution.alpha == pytest.approx([2.0])
    assert solution.rho == pytest.approx([0.5])


def test_finite_queue_traffic(mm1_finite):
    """The finite queue solves as a single open station."""
    solution = solve_traffic(mm1_finite)
    assert solution.rho == pytest.approx([0.8])
    assert mm1_finite.rho == pytest.approx(0.8)


def test_spectral_radius():
    """Perron roots of small nonnegative matrices."""
    assert spectral_radius(np.array([[0.5]])) == pytest.approx(0.5, abs=1e-9)
    assert spectral_radius(np.array([[0.0, 0.5], [0.5, 0.0]])) == pytest.approx(0.5, abs=1e-9)
    assert spectral_radius(np.zeros((3, 3))) == pytest.approx(0.0, abs=1e-9)


def test_closed_routing_is_singular():
    """A routing matrix with no exit has spectral radius 1."""
    model = NetworkModel(
        d=2,
        arrivals={1: Exponential(rate=1.0)},
        services=[Exponential(rate=2.0), Exponential(rate=2.0)],
        routing=[[0.0, 1.0], [1.0, 0.0]],
    )
    with pytest.raises(SingularRouting):
        solve_traffic(model)


def test_stability_verdict(tandem):
    """Stations with rho >= 1 are reported, 1-based."""
    assert check_stability(tandem).stable
    overloaded = NetworkModel(
        d=2,
        arrivals={1: Exponential(rate=1.0)},
        services=[Exponential(rate=2.0), Exponential(rate=0.5)],
        routing=[[0.0, 1.0], [0.0, 0.0]],
    )
    verdict = check_stability(overloaded)
    assert not verdict.stable
    assert verdict.unstable == [2]


def test_finite_queue_always_stable():
    """The buffer caps the queue, so rho >= 1 is still recurrent."""
    model = FiniteQueueModel(arrival=Exponential(rate=2.0), service=Exponential(rate=1.0), ell0=3)
    verdict = check_stability(model)
    assert verdict.stable
    assert verdict.unstable == []
    assert verdict.rho == pytest.approx([2.0])


def test_shape_validation():
    """Mismatched services, bad stations and bad routing rows are rejected."""
    with pytest.raises(ValidationError):
        NetworkModel(d=2, arrivals={1: Exponential(rate=1.0)}, services=[Exponential(rate=2.0)])
    with pytest.raises(ValidationError):
        NetworkModel(d=1, arrivals={2: Exponential(rate=1.0)}, services=[Exponential(rate=2.0)])
    with pytest.raises(ValidationError):
        NetworkModel(
            d=1,
            arrivals={1: Exponential(rate=1.0)},
            services=[Exponential(rate=2.0)],
            routing=[[1.5]],
        )


def test_document_keys(tandem):
    """Arrival stations may be given as JSON object keys."""
    model = NetworkModel.model_validate(tandem.model_dump(mode="json"))
    assert model == tandem
    assert model.exogenous == (0,)
    assert model.arrival_dist(1) is None
    assert model.lam.tolist() == [1.0, 0.0]
    assert model.exit_probabilities.tolist() == [0.0, 1.0]
