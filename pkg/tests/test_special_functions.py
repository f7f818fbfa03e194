import math

import pytest
from hypothesis import given
import hypothesis.strategies as st

from obstacle.errors import SpecialFunctionError
from obstacle.homogeneous import family_eval
from obstacle.special_functions import (
    HypergeometricParams, associated_residual, gamma_real, hyp2f1, legendre_p, ode_residuals,
    pochhammer, polar_residual, polar_trace, recip_gamma,
)


class TestPochhammerGamma:
    def test_values(self):
        assert pochhammer(3.7, 0) == 1.0
        assert pochhammer(1.0, 5) == 120.0
        assert pochhammer(-2.0, 3) == 0.0

    @given(q=st.floats(-5, 5), l=st.integers(0, 8))
    def test_recurrence(self, q, l):
        assert pochhammer(q, l + 1) == pytest.approx(pochhammer(q, l) * (q + l), rel=1e-12, abs=1e-12)

    def test_negative_order(self):
        with pytest.raises(SpecialFunctionError):
            pochhammer(1.0, -1)

    def test_gamma_half(self):
        assert gamma_real(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-14)

    def test_gamma_pole(self):
        with pytest.raises(SpecialFunctionError):
            gamma_real(-2.0)
        assert recip_gamma(-3.0) == 0.0
        assert recip_gamma(0.0) == 0.0


class TestHypergeometric:
    @given(
        b=st.floats(-4, 4),
        c=st.floats(0.25, 6),
        z=st.floats(-2, 2),
    )
    def test_terminating_quadratic(self, b, c, z):
        expected = 1 - 2 * b * z / c + b * (b + 1) * z * z / (c * (c + 1))
        value = hyp2f1(HypergeometricParams(-2.0, b, c, z))
        assert value == pytest.approx(expected, rel=1e-12, abs=1e-12)

    @given(z=st.floats(-0.9, 0.9).filter(lambda v: abs(v) > 1e-6))
    def test_log_series(self, z):
        value = hyp2f1(HypergeometricParams(1.0, 1.0, 2.0, z))
        assert value == pytest.approx(-math.log1p(-z) / z, rel=1e-10)

    def test_degree(self):
        assert HypergeometricParams(-3.0, 0.5, 1.5, 0.2).degree == 3
        assert HypergeometricParams(0.5, 0.5, 1.5, 0.2).degree is None

    def test_invalid(self):
        with pytest.raises(SpecialFunctionError):
            HypergeometricParams(0.5, 0.5, -1.0, 0.2)
        with pytest.raises(SpecialFunctionError):
            HypergeometricParams(0.5, 0.5, 1.5, 1.0)


def _fd(f, x, step=1e-4):
    return (f(x + step) - f(x - step)) / (2 * step), (f(x + step) - 2 * f(x) + f(x - step)) / step ** 2


class TestLegendre:
    @pytest.mark.parametrize("nu,sign,s", [
        (2.0, 1, 0.3),
        (2.0, -1, 0.3),
        (3.0, -1, 0.75),
        (1.7, 1, 0.3),
        (2.5, -1, 0.5),
    ])
    def test_solves_associated_equation(self, nu, sign, s):
        def h(x):
            return legendre_p(nu, sign, s, x)

        for x in (-0.6, -0.2, 0.1, 0.5):
            dh, d2h = _fd(h, x)
            scale = max(1.0, abs(h(x)), abs(dh), abs(d2h))
            assert abs(associated_residual(h(x), dh, d2h, x, s, nu)) <= 1e-5 * scale

    def test_euler_matches_convergent_direct_series(self):
        # ν + s entier : seule la forme d'Euler termine
        euler = legendre_p(1.75, 1, 0.25, 0.3, form="euler")
        assert euler == pytest.approx(legendre_p(1.75, 1, 0.25, 0.3, form="direct"), rel=1e-10)

    def test_non_terminating_auto(self):
        with pytest.raises(SpecialFunctionError):
            legendre_p(0.37, 1, 0.3, 0.2)

    @pytest.mark.parametrize("args", [
        (2.0, 0, 0.3, 0.2),
        (2.0, 1, 1.0, 0.2),
        (2.0, 1, 0.3, 1.0),
    ])
    def test_invalid(self, args):
        with pytest.raises(SpecialFunctionError):
            legendre_p(*args)


class TestOde:
    @given(theta=st.floats(0.05, math.pi - 0.05))
    def test_cos2theta(self, theta):
        y, dy, d2y = math.cos(2 * theta), -2 * math.sin(2 * theta), -4 * math.cos(2 * theta)
        assert abs(polar_residual(y, dy, d2y, theta, 0.0, 2.0)) <= 1e-12

    @pytest.mark.parametrize("theta", [0.3, 1.0, 2.5])
    def test_psi1_trace(self, theta):
        def F(x1, x2):
            return float(family_eval("Psi", 1, x1, x2, 0.5))

        y, dy, d2y = polar_trace(F, theta, step=1e-2, points=7)
        assert abs(polar_residual(y, dy, d2y, theta, 0.0, 1.5)) <= 1e-8

    @given(
        y=st.floats(-10, 10),
        dy=st.floats(-10, 10),
        d2y=st.floats(-10, 10),
        theta=st.floats(0.2, math.pi - 0.2),
        s=st.floats(0.05, 0.95),
        lam=st.floats(0.5, 5.0),
    )
    def test_associated_is_rescaled_polar(self, y, dy, d2y, theta, s, lam):
        a = 1.0 - 2.0 * s
        polar, assoc = ode_residuals(y, dy, d2y, theta, a, lam)
        assert assoc == pytest.approx(math.sin(theta) ** (-s) * polar, rel=1e-9, abs=1e-8)

    def test_theta_range(self):
        with pytest.raises(SpecialFunctionError):
            polar_residual(1.0, 0.0, 0.0, 0.0, 0.0, 1.0)

    def test_polar_trace_of_cosine(self):
        y, dy, d2y = polar_trace(lambda x1, x2: x1, 0.7)
        assert y == pytest.approx(math.cos(0.7), abs=1e-12)
        assert dy == pytest.approx(-math.sin(0.7), abs=1e-7)
        assert d2y == pytest.approx(-math.cos(0.7), abs=1e-5)

    def test_unknown_stencil(self):
        with pytest.raises(SpecialFunctionError):
            polar_trace(lambda x1, x2: x1, 0.7, points=5)
