"""
Test the exponent solvers and their expansions.
"""
import math

import numpy as np
import pytest

from palmbar.models.distributions import Erlang, Exponential
from palmbar.models.network import FiniteQueueModel, NetworkModel
from palmbar.services.exponents import (
    eta_expansion,
    exponential_test_function,
    solve_eta,
    solve_etas,
    solve_zeta,
    zeta_expansion,
)


@pytest.mark.parametrize("theta", [-2.0, -0.5, 0.3, 1.0])
def test_eta_closed_form(theta):
    """Exponential inputs give eta = lam (e^theta - 1)."""
    lam = 1.5
    eta = solve_eta(1, theta, 1.0, Exponential(rate=lam), cutoff=math.inf)
    assert eta == pytest.approx(lam * math.expm1(theta), rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("theta", [-1.0, -0.25, 0.5, 2.0])
def test_zeta_closed_form(theta):
    """Exponential services without feedback give zeta = mu (e^-theta - 1)."""
    mu = 2.0
    model = FiniteQueueModel(arrival=Exponential(rate=1.0), service=Exponential(rate=mu), ell0=3)
    zeta = solve_zeta(theta, 1.0, model, cutoff=math.inf)
    assert zeta[0] == pytest.approx(mu * math.expm1(-theta), rel=1e-9, abs=1e-12)


def test_zeta_with_routing(tandem):
    """Station 1 routes to 2: e^-theta1 e^theta2 E[exp(-zeta T)] = 1."""
    theta = [-0.5, -0.2]
    zeta = solve_zeta(theta, 1.0, tandem, cutoff=math.inf)
    assert zeta[0] == pytest.approx(2.0 * math.expm1(theta[0] - theta[1]), rel=1e-9)
    assert zeta[1] == pytest.approx(1.25 * math.expm1(-theta[1]), rel=1e-9)


def test_zero_theta_gives_zero():
    """theta = 0 is solved by 0 exponents."""
    assert solve_eta(1, 0.0, 0.5, Erlang(k=2, rate=1.0)) == 0.0
    model = NetworkModel(d=1, arrivals={1: Exponential(rate=1.0)}, services=[Erlang(k=2, rate=4.0)])
    assert solve_zeta(0.0, 0.5, model).tolist() == [0.0]


def test_missing_input_gives_zero(tandem):
    """Stations without exogenous input have no arrival exponent."""
    etas = solve_etas([-0.5, -0.5], 0.5, tandem)
    assert etas[1] == 0.0
    assert solve_eta(2, -0.5, 0.5, None) == 0.0


def test_truncated_equation_holds():
    """The solved exponent satisfies the truncated equation."""
    dist = Erlang(k=3, rate=2.0)
    theta, r = -0.7, 0.5
    eta = solve_eta(1, theta, r, dist)
    assert math.exp(theta) * dist.truncated_exp_moment(eta, 1.0 / r) == pytest.approx(1.0, abs=1e-9)


def test_expansion_coefficients():
    """First and second order coefficients."""
    dist = Exponential(rate=1.0)
    eta = eta_expansion(1.0, 0.1, dist)
    assert (eta.first_order, eta.second_order) == pytest.approx((1.0, 0.5))
    zeta = zeta_expansion(1.0, 0.1, dist)
    assert (zeta.first_order, zeta.second_order) == pytest.approx((-1.0, 0.5))
    assert eta.approximation() == pytest.approx(0.1 + 0.005)


@pytest.mark.parametrize("dist", [Exponential(rate=1.0), Erlang(k=2, rate=2.0)])
def test_expansion_residual_shrinks(dist):
    """|eta(r theta) - expansion| / r^2 drops by at least 1.5x per halving of r."""
    theta = 1.0
    ratios = []
    for r in (0.1, 0.05, 0.025):
        eta = solve_eta(1, r * theta, r, dist, cutoff=math.inf)
        ratios.append(abs(eta - eta_expansion(theta, r, dist).approximation()) / r**2)
    assert ratios[0] / ratios[1] >= 1.5
    assert ratios[1] / ratios[2] >= 1.5


def test_exponential_test_function(gj_tandem):
    """Solved exponents flow into the test function."""
    f = exponential_test_function(gj_tandem, [-0.5, -1.0], 0.5)
    assert f.cutoff == 2.0
    assert f.bounded
    assert f.eta[1] == 0.0
    assert np.all(np.asarray(f.zeta) != 0.0)


def test_finite_queue_allows_positive_theta(mm1_finite):
    """Bounded queues admit any theta."""
    f = exponential_test_function(mm1_finite, 1.0, 0.5)
    assert f.bounded
    assert f.eta[0] > 0.0
