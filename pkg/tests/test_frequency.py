import math

import numpy as np
import pytest

from obstacle.errors import FrequencyError
from obstacle.frequency import (
    FREQ_TOLERANCE, ball_quadrature, check_admissible, classify_almost_homogeneous, delta_osc,
    frequency_components, frequency_curve, h_doubling_exponent, h_scaling_bracket,
    h_scaling_check, l2_ball, phi_cutoff, spatial_osc_check, theta_max,
    verify_frequency_identities,
)
from obstacle.geometry import extract_sets
from obstacle.homogeneous import HomogeneousProfile, embed_profile
from obstacle.weighted_grid import make_grid, sample


@pytest.fixture(scope="module")
def grid():
    return make_grid(2, 1.0, 1 / 128, 0.0)


@pytest.fixture(scope="module")
def psi1(grid):
    return embed_profile(HomogeneousProfile("Psi", 1, 0.5), grid)


@pytest.fixture(scope="module")
def phi2(grid):
    return embed_profile(HomogeneousProfile("Phi", 2, 0.5), grid)


class TestCutoff:
    def test_values(self):
        assert phi_cutoff(0.0) == 1.0
        assert phi_cutoff(0.5) == 1.0
        assert phi_cutoff(0.75) == pytest.approx(0.5)
        assert phi_cutoff(1.0) == 0.0
        assert phi_cutoff(3.0) == 0.0

    def test_negative(self):
        with pytest.raises(FrequencyError):
            phi_cutoff(-0.1)


class TestQuadrature:
    def test_weighted_ball_volume(self):
        # a = 0 : la somme des poids est l'aire πr²
        fld = sample(make_grid(2, 1.0, 1 / 16, 0.0), lambda p: 1.0 + 0.0 * p[..., 0])
        _, weights = ball_quadrature(fld, [0.0], 0.5)
        assert weights.sum() == pytest.approx(math.pi * 0.25, rel=1e-10)

    def test_weighted_ball_volume_3d(self):
        a = 0.4
        fld = sample(make_grid(3, 1.0, 1 / 8, a), lambda p: 1.0 + 0.0 * p[..., 0])
        _, weights = ball_quadrature(fld, [0.0, 0.0], 0.5)
        exact = 2 * 2 * math.pi * 0.5 ** (3 + a) / (3 + a) / (1 + a)
        assert weights.sum() == pytest.approx(exact, rel=1e-6)

    def test_l2_of_constant(self):
        fld = sample(make_grid(2, 1.0, 1 / 16, 0.0), lambda p: 2.0 + 0.0 * p[..., 0])
        assert l2_ball(fld, [0.0], 0.5) == pytest.approx(4.0 * math.pi * 0.25, rel=1e-10)

    def test_admissibility(self, psi1):
        with pytest.raises(FrequencyError):
            check_admissible(psi1, [0.0], 0.999)
        with pytest.raises(FrequencyError):
            check_admissible(psi1, [0.5], 0.6)
        with pytest.raises(FrequencyError):
            check_admissible(psi1, [0.0, 0.3], 0.2)
        with pytest.raises(FrequencyError):
            check_admissible(psi1, [0.0], 0.0)

    def test_zero_field(self):
        fld = sample(make_grid(2, 1.0, 1 / 16, 0.0), lambda p: 0.0 * p[..., 0])
        with pytest.raises(FrequencyError):
            frequency_components(fld, [0.0], 0.5)


class TestHomogeneous:
    @pytest.mark.parametrize("family,m", [("Psi", 1), ("Phi", 2), ("Pi", 2)])
    def test_frequency_is_constant(self, grid, family, m):
        profile = HomogeneousProfile(family, m, 0.5)
        fld = embed_profile(profile, grid)
        for r in (0.2, 0.4):
            assert frequency_components(fld, [0.0], r)["I"] == pytest.approx(profile.lam, abs=FREQ_TOLERANCE)

    def test_weighted_frequency(self):
        spec = make_grid(2, 1.0, 1 / 128, 0.5)
        profile = HomogeneousProfile("Phi", 2, 0.25)
        fld = embed_profile(profile, spec)
        assert frequency_components(fld, [0.0], 0.25)["I"] == pytest.approx(2.0, abs=FREQ_TOLERANCE)

    def test_normalized_h(self, psi1):
        assert frequency_components(psi1, [0.0], 0.5)["H"] == pytest.approx(0.5 ** 4, rel=0.02)

    def test_identities(self, phi2):
        res = verify_frequency_identities(phi2, [0.0], 0.25, 1e-3)
        assert res["h_identity_rel"] <= 0.02
        assert res["d_identity_rel"] <= 0.02
        assert res["integration_by_parts_rel"] <= 0.02
        assert res["cauchy_schwarz_rel"] >= -0.02

    def test_h_scaling(self, phi2):
        target = 1 + 0 + 2 * 2.0
        assert h_doubling_exponent(phi2, [0.0], 0.2) == pytest.approx(target, rel=0.03)
        assert abs(h_scaling_check(phi2, [0.0], 0.2)) <= 0.1
        assert h_scaling_bracket(phi2, [0.0], 0.2, lower=1.9, upper=2.1)
        assert not h_scaling_bracket(phi2, [0.0], 0.2, lower=2.5)

    def test_bad_dr(self, phi2):
        with pytest.raises(FrequencyError):
            verify_frequency_identities(phi2, [0.0], 0.25, 0.3)

    @pytest.mark.parametrize("family,m,k", [("Psi", 1, 4.0), ("Phi", 2, 5.0)])
    @pytest.mark.parametrize("r", [0.1, 0.2, 0.4])
    def test_l2_below_r_h(self, grid, family, m, k, r):
        fld = embed_profile(HomogeneousProfile(family, m, 0.5), grid)
        l2 = l2_ball(fld, [0.0], r)
        H = frequency_components(fld, [0.0], r)["H"]
        assert l2 <= 1.02 * r * H
        # homogène de degré λ : rapport k / (2(k+1)(1 - 2^{-k})), k = n + a + 2λ
        assert l2 / (r * H) == pytest.approx(k / (2 * (k + 1) * (1 - 2.0 ** -k)), rel=0.02)


class TestScaling:
    @pytest.fixture(scope="class")
    def mixed(self):
        leading = HomogeneousProfile("Psi", 1, 0.5).evaluator(1)
        correction = HomogeneousProfile("Psi", 3, 0.5).evaluator(1)
        return lambda p: leading(p) + 0.4 * correction(p)

    @pytest.mark.parametrize("c", [1.0, 5.0])
    @pytest.mark.parametrize("r", [0.5, 0.25])
    def test_frequency_is_scaling_invariant(self, grid, mixed, c, r):
        rho = 0.4
        x0 = np.array([0.1, 0.0])
        u = sample(grid, mixed)
        v = sample(grid, lambda p: c * mixed(x0 + r * p))
        expected = frequency_components(u, x0[:1], rho * r)["I"]
        assert frequency_components(v, [0.0], rho)["I"] == pytest.approx(expected, abs=2 * FREQ_TOLERANCE)

    def test_amplitude_drops_out(self, grid, mixed):
        u = sample(grid, mixed)
        v = sample(grid, lambda p: 5.0 * mixed(p))
        assert frequency_components(v, [0.0], 0.3)["I"] == pytest.approx(
            frequency_components(u, [0.0], 0.3)["I"], rel=1e-12
        )


class TestCurve:
    def test_monotone_on_homogeneous(self, psi1):
        curve = frequency_curve(psi1, [0.0], [0.05, 0.1, 0.2, 0.4], slack=2 * FREQ_TOLERANCE)
        assert curve.monotone
        assert len(curve.rows()) == 4
        assert curve.rows()[0]["center"] == [0.0]
        assert curve.to_dict()["monotone"] is True

    def test_decreasing_frequency_is_reported(self):
        # ρ² près de 0, saturé loin : I décroît (champ non solution)
        spec = make_grid(2, 1.0, 1 / 64, 0.0)

        def bump(p):
            rho2 = p[..., 0] ** 2 + p[..., 1] ** 2
            return rho2 / (rho2 + 0.04)

        curve = frequency_curve(sample(spec, bump), [0.0], [0.05, 0.2, 0.6], slack=1e-9)
        assert curve.I[-1] < curve.I[0]
        assert not curve.monotone
        assert all(v["drop"] > 0 for v in curve.violations)
        assert {"r0", "r1", "drop"} <= set(curve.violations[0])

    def test_radii_must_increase(self, psi1):
        with pytest.raises(FrequencyError):
            frequency_curve(psi1, [0.0], [0.2, 0.1])


class TestOscillation:
    def test_delta_osc(self, psi1):
        rec = delta_osc(psi1, [0.0], 0.1, 0.4)
        assert abs(rec.delta) <= 2 * FREQ_TOLERANCE
        assert delta_osc(psi1, [0.0], 0.3, 0.3).delta == 0.0
        with pytest.raises(FrequencyError):
            delta_osc(psi1, [0.0], 0.5, 0.4)

    def test_almost_homogeneous(self):
        # B_1 doit tenir dans la boîte avec une cellule de marge
        fld = embed_profile(HomogeneousProfile("Psi", 1, 0.5), make_grid(2, 1.25, 1 / 64, 0.0))
        fb = extract_sets(fld)
        assert classify_almost_homogeneous(fld, 0.05, fb)
        assert not classify_almost_homogeneous(fld, 0.05, fb, center=[0.25])

    def test_theta_max(self, psi1):
        fb = extract_sets(psi1)
        value = theta_max(psi1, [0.05], 0.1, fb)
        assert value == pytest.approx(1.5, abs=2 * FREQ_TOLERANCE)
        assert theta_max(psi1, [0.5], 0.1, fb) is None

    def test_spatial_osc(self, phi2):
        res = spatial_osc_check(phi2, [0.0], [0.01], 0.01, 8.0)
        assert res["lhs"] >= 0
        assert len(res["rhs_terms"]) == 2
        with pytest.raises(FrequencyError):
            spatial_osc_check(phi2, [0.0], [0.01], 0.01, 6.0)
