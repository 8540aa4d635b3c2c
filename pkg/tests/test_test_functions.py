"""
Test the test-function family.
"""
import math

import pytest

from palmbar.core.errors import UnboundedTestFunction
from palmbar.models.state import SystemState
from palmbar.services.test_functions import (
    ConstantFunction,
    ExponentialFamilyFunction,
    LinearResidual,
    ResidualExponential,
    gauss_legendre_integral,
)

STATE = SystemState(L=(2,), R_e=(0.7,), R_s=(1.6,))


def test_constant():
    """Constants have no drift."""
    f = ConstantFunction(2.5)
    assert f(STATE) == 2.5
    assert f.drift(STATE) == 0.0
    assert f.segment_integral(STATE, 0.3) == 0.0


def test_residual_exponential_drift():
    """H exp(-a R_j) = a exp(-a R_j) while clock j runs, 0 when frozen."""
    f = ResidualExponential(2, 1.5)
    assert f.drift(STATE) == pytest.approx(1.5 * math.exp(-1.5 * 1.6))
    idle = SystemState(L=(0,), R_e=(0.7,), R_s=(1.6,))
    assert f.drift(idle) == 0.0
    assert f.segment_integral(idle, 0.5) == 0.0


def test_linear_residual():
    """R_j falls at unit rate and is flagged unbounded."""
    f = LinearResidual(1)
    assert not f.bounded
    assert f.drift(STATE) == -1.0
    assert f.segment_integral(STATE, 0.4) == pytest.approx(-0.4)


def test_exponential_family_value():
    """Residuals enter only below the cutoff."""
    f = ExponentialFamilyFunction([-0.3], [0.4], [-0.2], cutoff=1.0)
    expected = math.exp(-0.3 * 2 - 0.4 * 0.7 + 0.2 * 1.0)
    assert f(STATE) == pytest.approx(expected)
    assert f.bounded


def test_exponential_segment_integral_matches_quadrature():
    """The closed-form integral of Hf agrees with Gauss-Legendre quadrature split at kinks."""
    f = ExponentialFamilyFunction([-0.3], [0.4], [-0.2], cutoff=1.0)
    assert f.kinks(STATE, 1.2) == pytest.approx([0.6])
    exact = f.segment_integral(STATE, 1.2)
    numeric = gauss_legendre_integral(f, STATE, 1.2, points=5, panels=4)
    assert exact == pytest.approx(numeric, rel=1e-10)


def test_coordinate_integrals_sum_to_drift():
    """Per-clock parts add up to the segment integral."""
    f = ExponentialFamilyFunction([-0.3], [0.4], [-0.2], cutoff=1.0)
    parts = f.coordinate_integrals(STATE, 1.2)
    assert set(parts) == {1, 2}
    assert math.fsum(parts.values()) == pytest.approx(f.segment_integral(STATE, 1.2), rel=1e-12)


def test_exponential_overflow():
    """Exploding values raise instead of returning inf."""
    f = ExponentialFamilyFunction([1000.0], [0.0], [0.0])
    assert not f.bounded
    with pytest.raises(UnboundedTestFunction):
        f(SystemState(L=(1000,), R_e=(1.0,), R_s=(1.0,)))


def test_exponential_shape_checks():
    """theta, eta and zeta must line up."""
    with pytest.raises(ValueError):
        ExponentialFamilyFunction([0.1, 0.2], [0.1], [0.1, 0.2])
