import math

import numpy as np
import pytest
from hypothesis import given
import hypothesis.strategies as st

from obstacle.errors import GeometryError
from obstacle.geometry import (
    DiscreteMeasure, beta_number, beta_profile, beta_trend, blowup_fit, brute_force_beta, extract_sets,
    flux_valleys, free_boundary_mask, jacobi_eigh, jones_square, mean_flatness_check, measure_from_fb,
    minkowski_profile, osc_lambda, rescale_field, spine_and_stratum, stratum_of,
)
from obstacle.homogeneous import HomogeneousProfile, embed_profile, profile_point_set
from obstacle.weighted_grid import make_grid, sample

PSI1 = HomogeneousProfile("Psi", 1, 0.5)
PHI2 = HomogeneousProfile("Phi", 2, 0.5)
ORIGIN = [0.0, 0.0, 0.0]


@pytest.fixture(scope="module")
def psi1():
    return embed_profile(PSI1, make_grid(2, 1.0, 1 / 64, 0.0))


@pytest.fixture(scope="module")
def phi2():
    return embed_profile(PHI2, make_grid(2, 1.0, 1 / 64, 0.0))


@pytest.fixture(scope="module")
def phi2_3d():
    return embed_profile(HomogeneousProfile("Phi", 2, 0.5, direction=(1.0, 0.0)), make_grid(3, 1.0, 1 / 16, 0.0))


@pytest.fixture(scope="module")
def psi1_rotated():
    angle = math.radians(30.0)
    profile = HomogeneousProfile("Psi", 1, 0.5, direction=(math.cos(angle), math.sin(angle)))
    return embed_profile(profile, make_grid(3, 1.0, 1 / 32, 0.0))


def _line(count=9, step=0.1):
    return DiscreteMeasure([[step * i, 0.5 * step * i, 0.0] for i in range(-(count // 2), count // 2 + 1)],
                           np.ones(count))


class TestSets:
    def test_free_boundary_mask(self):
        contact = np.array([True, True, True, False, False, True])
        assert free_boundary_mask(contact).tolist() == [False, False, True, False, False, True]

    def test_psi1_sets(self, psi1):
        fb = extract_sets(psi1)
        assert fb.free_boundary_points().tolist() == [[0.0]]
        assert fb.counts()["contact"] == psi1.spec.cells + 1
        assert fb.is_free_boundary([0.0])
        assert not fb.is_free_boundary([0.5])
        assert fb.to_dict()["counts"] == fb.counts()

    def test_phi2_contact_is_a_point(self, phi2):
        fb = extract_sets(phi2)
        assert fb.points(fb.contact).tolist() == [[0.0]]
        assert fb.nodal.sum() >= 1

    @pytest.mark.parametrize("s", [0.3, 0.5, 0.75])
    def test_pi2_nodal_is_its_spine(self, s):
        profile = HomogeneousProfile("Pi", 2, s)
        spec = make_grid(2, 1.0, 1 / 32, 1.0 - 2.0 * s)
        fb = extract_sets(embed_profile(profile, spec))
        assert fb.counts()["contact"] == spec.cells + 1
        assert fb.counts()["free_boundary"] == 0
        assert fb.points(fb.nodal).tolist() == [[0.0]]
        table = profile_point_set(profile, spec)
        assert fb.points(fb.nodal).tolist() == table.points(table.nodal).tolist()

    def test_flux_valleys(self):
        flux = np.array([3.0, 1.0, 0.2, 0.2, 1.0, 0.0])
        assert flux_valleys(flux).tolist() == [False, False, True, True, False, True]
        flat = np.ones((3, 3))
        assert not flux_valleys(flat).any()
        band = np.tile(np.array([[4.0], [1.0], [0.0], [1.0], [4.0]]), (1, 5))
        assert np.array_equal(flux_valleys(band), np.tile((np.arange(5) == 2)[:, None], (1, 5)))

    def test_default_contact_tolerance(self, psi1):
        fb = extract_sets(psi1)
        assert fb.contact_tol == pytest.approx(1e-6 * float(np.max(np.abs(psi1.values))))

    def test_phi2_free_boundary_in_3d(self, phi2_3d):
        fb = extract_sets(phi2_3d)
        axis = phi2_3d.spec.axis(1)
        expected = sorted([0.0, float(y)] for y in axis)
        assert sorted(fb.free_boundary_points().tolist()) == expected
        assert sorted(fb.points(fb.contact).tolist()) == expected
        assert np.all(fb.points(fb.nodal)[:, 0] == 0.0)

    def test_negative_tolerance(self, psi1):
        with pytest.raises(GeometryError):
            extract_sets(psi1, contact_tol=-1.0)
        with pytest.raises(GeometryError):
            extract_sets(psi1, grad_tol=0.0)


class TestJacobi:
    @given(st.lists(st.floats(-10, 10), min_size=6, max_size=6))
    def test_matches_numpy(self, entries):
        a, b, c, d, e, f = entries
        matrix = np.array([[a, b, c], [b, d, e], [c, e, f]])
        values, vectors = jacobi_eigh(matrix)
        scale = max(1.0, float(np.max(np.abs(matrix))))
        assert np.allclose(values, np.linalg.eigvalsh(matrix)[::-1], atol=1e-9 * scale)
        assert np.allclose(matrix @ vectors, vectors * values[None, :], atol=1e-8 * scale)
        assert np.all(np.diff(values) <= 0)

    def test_not_symmetric(self):
        with pytest.raises(GeometryError):
            jacobi_eigh([[1.0, 2.0], [0.0, 1.0]])


class TestMeasure:
    @pytest.mark.parametrize("points,masses", [
        ([[0.0, 0.0, 0.1]], [1.0]),
        ([[0.0, 0.0, 0.0]], [1.0, 2.0]),
        ([[0.0, 0.0, 0.0]], [-1.0]),
        ([0.0, 0.0, 0.0], [1.0]),
    ])
    def test_invalid(self, points, masses):
        with pytest.raises(GeometryError):
            DiscreteMeasure(points, masses)

    def test_from_free_boundary(self):
        fb = profile_point_set(HomogeneousProfile("Psi", 1, 0.5, direction=(1.0, 0.0)), make_grid(3, 1.0, 0.25, 0.0))
        mu = measure_from_fb(fb)
        assert mu.dim == 3
        assert mu.total_mass == pytest.approx(len(mu.points) * 0.25)
        assert np.all(mu.points[:, 0] == 0.0)


class TestBeta:
    def test_three_points(self):
        mu = DiscreteMeasure([[0, 0, 0], [1, 0, 0], [0, 1, 0]], np.ones(3))
        stats = beta_number(mu, ORIGIN, 2.0, 1)
        assert stats.beta == pytest.approx(math.sqrt(1.0 / 24.0), abs=1e-12)
        assert stats.eigenvalues[:2] == pytest.approx([1.0, 1.0 / 3.0])
        assert stats.eigenvalues[2] == pytest.approx(0.0, abs=1e-14)
        assert stats.barycenter == pytest.approx((1 / 3, 1 / 3, 0.0))
        assert stats.to_dict()["k"] == 1

    def test_collinear(self):
        assert beta_number(_line(), ORIGIN, 1.0, 1).beta <= 1e-10

    def test_empty_ball(self):
        stats = beta_number(_line(), [5.0, 5.0, 0.0], 0.5, 1)
        assert stats.mass == 0.0 and stats.beta == 0.0

    def test_planar_point_accepted(self):
        assert beta_number(_line(), [0.0, 0.0], 1.0, 1).beta <= 1e-10

    @pytest.mark.parametrize("r,k", [(0.0, 1), (-1.0, 1), (1.0, 3), (1.0, -1)])
    def test_invalid(self, r, k):
        with pytest.raises(GeometryError):
            beta_number(_line(), ORIGIN, r, k)

    def test_matches_plane_sweep(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            count = int(rng.integers(3, 10))
            pts = np.hstack([rng.uniform(-0.5, 0.5, size=(count, 2)), np.zeros((count, 1))])
            mu = DiscreteMeasure(pts, rng.uniform(0.1, 1.0, size=count))
            expected = brute_force_beta(mu, ORIGIN, 1.0, 1)
            assert beta_number(mu, ORIGIN, 1.0, 1).beta == pytest.approx(expected, abs=1e-6)

    @given(shift=st.floats(-2, 2), angle=st.floats(0, 2 * math.pi))
    def test_rigid_motion_invariance(self, shift, angle):
        base = np.array([[0.0, 0.0], [0.3, 0.1], [-0.2, 0.25], [0.1, -0.3]])
        rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
        moved = base @ rot.T + shift
        mu0 = DiscreteMeasure(np.hstack([base, np.zeros((4, 1))]), np.ones(4))
        mu1 = DiscreteMeasure(np.hstack([moved, np.zeros((4, 1))]), np.ones(4))
        beta0 = beta_number(mu0, ORIGIN, 1.0, 1).beta
        beta1 = beta_number(mu1, [shift, shift, 0.0], 1.0, 1).beta
        assert beta1 == pytest.approx(beta0, rel=1e-9, abs=1e-12)


class TestJones:
    def test_straight_line(self):
        assert jones_square(_line(41, 0.02), [0.0, 0.0], [0.4, 0.2, 0.1, 0.05]) <= 1e-10

    def test_three_point_first_term(self):
        mu = DiscreteMeasure([[0, 0, 0], [1, 0, 0], [0, 1, 0]], np.ones(3))
        terms = beta_profile(mu, ORIGIN, [2.0, 1.0, 0.5])
        assert terms[0] == pytest.approx(1.0 / 24.0)
        assert jones_square(mu, ORIGIN, [2.0, 1.0, 0.5]) == pytest.approx(sum(terms))

    @pytest.mark.parametrize("scales", [[0.4, 0.2, 0.15], [0.2, 0.4], [0.4, 0.0]])
    def test_non_geometric_scales(self, scales):
        with pytest.raises(GeometryError):
            jones_square(_line(), [0.0, 0.0], scales)

    def test_rotated_raster_stays_on_floor(self):
        angle = math.radians(30.0)
        spec = make_grid(3, 1.0, 1 / 32, 0.0)
        fb = profile_point_set(HomogeneousProfile("Psi", 1, 0.5, direction=(math.cos(angle), math.sin(angle))), spec)
        trend = beta_trend(measure_from_fb(fb), ORIGIN, [0.4, 0.2, 0.1], spec.spacing)
        assert trend["decaying"]
        assert all(row["beta_sq"] <= row["floor"] for row in trend["scales"])
        assert all(row["beta_sq"] > 0 for row in trend["scales"])

    def test_small_scale_wiggle_is_not_decaying(self):
        xs = np.arange(-50, 51) * 0.01
        ys = np.where(np.abs(xs) < 0.12, 0.03 * (-1.0) ** np.arange(101), 0.0)
        mu = DiscreteMeasure(np.stack([xs, ys, np.zeros(101)], axis=1), np.full(101, 0.01))
        trend = beta_trend(mu, ORIGIN, [0.4, 0.2, 0.1], 0.01)
        excess = [row["excess"] for row in trend["scales"]]
        assert excess[2] > excess[0]
        assert not trend["decaying"]

    def test_trend_needs_positive_spacing(self):
        with pytest.raises(GeometryError):
            beta_trend(_line(), [0.0, 0.0], [0.4, 0.2], 0.0)

    def test_osc_lambda(self):
        assert osc_lambda(_line(), [0.0, 0.0], 0.5, 0.5) == pytest.approx(0.0, abs=1e-12)
        mu = DiscreteMeasure([[0, 0, 0], [1, 0, 0], [0, 1, 0]], np.ones(3))
        assert osc_lambda(mu, ORIGIN, 2.0, 0.5) > 0.0
        with pytest.raises(GeometryError):
            osc_lambda(_line(), [0.0, 0.0], 0.5, 1.0)


class TestMinkowski:
    def test_straight_segment(self):
        spec = make_grid(3, 1.0, 1 / 128, 0.0)
        fb = profile_point_set(HomogeneousProfile("Psi", 1, 0.5, direction=(1.0, 0.0)), spec)
        rows = minkowski_profile(fb, ((0.0, 0.0), 0.5), [1 / 16, 1 / 32])
        assert [row["r"] for row in rows] == [1 / 16, 1 / 32]
        assert all(2.5 <= row["ratio"] <= 3.8 for row in rows)

    def test_radius_below_two_cells(self):
        spec = make_grid(3, 1.0, 1 / 8, 0.0)
        fb = profile_point_set(HomogeneousProfile("Psi", 1, 0.5, direction=(1.0, 0.0)), spec)
        with pytest.raises(GeometryError):
            minkowski_profile(fb, ((0.0, 0.0), 0.5), [1 / 16])

    def test_empty_window(self):
        spec = make_grid(3, 1.0, 1 / 8, 0.0)
        fb = profile_point_set(HomogeneousProfile("Psi", 1, 0.5, direction=(1.0, 0.0)), spec)
        rows = minkowski_profile(fb, ((0.75, 0.0), 0.25), [0.25])
        assert rows[0]["volume"] == 0.0


class TestBlowup:
    def test_psi1(self, psi1):
        fit = blowup_fit(psi1, [0.0], [0.5, 0.25])
        assert fit.lambda_estimate == pytest.approx(1.5, abs=0.05)
        assert (fit.family, fit.degree) == ("Psi", 1)
        assert fit.direction == (1.0,)
        assert fit.residual <= 0.05
        assert [row["r"] for row in fit.residuals] == [0.5, 0.25]
        assert fit.to_dict()["m"] == 1

    def test_rotated_psi1_in_3d(self, psi1_rotated):
        fit = blowup_fit(psi1_rotated, [0.0, 0.0], [0.5, 0.25])
        assert (fit.family, fit.degree) == ("Psi", 1)
        assert fit.lambda_estimate == pytest.approx(1.5, abs=0.05)
        angle = math.degrees(math.atan2(fit.direction[1], fit.direction[0]))
        assert angle == pytest.approx(30.0, abs=1.0)
        assert fit.residual <= 0.05

    def test_residual_decays_like_r_squared(self):
        leading = PSI1.evaluator(1)
        correction = HomogeneousProfile("Psi", 3, 0.5).evaluator(1)
        fld = sample(make_grid(2, 1.0, 1 / 64, 0.0), lambda p: leading(p) + 0.4 * correction(p))
        fit = blowup_fit(fld, [0.0], [0.5, 0.25])
        assert (fit.family, fit.degree) == ("Psi", 1)
        by_r = {row["r"]: row["residual"] for row in fit.residuals}
        # h_{1+s} et h_{3+s} orthogonales : résidu ≈ 0.4·r²·‖h_{3+s}‖/‖h_{1+s}‖
        assert by_r[0.5] == pytest.approx(0.1017, abs=0.01)
        assert by_r[0.25] == pytest.approx(0.0256, abs=0.005)
        assert by_r[0.25] < by_r[0.5]
        assert fit.residual == by_r[0.25]

    def test_center_outside_free_boundary(self, psi1):
        with pytest.raises(GeometryError):
            blowup_fit(psi1, [0.5], [0.25])

    def test_empty_radii(self, psi1):
        with pytest.raises(GeometryError):
            blowup_fit(psi1, [0.0], [])

    def test_rescale_outside_box(self, psi1):
        with pytest.raises(GeometryError):
            rescale_field(psi1, [0.5], 0.6)


class TestStrata:
    @pytest.mark.parametrize("lam,stratum", [
        (1.5, "regular"),
        (2.0, "singular"),
        (3.0, "other"),
        (3.5, "other"),
        (1.75, "unclassified"),
    ])
    def test_stratum_of(self, lam, stratum):
        assert stratum_of(lam, 0.5)[0] == stratum

    def test_spine_phi2(self, phi2):
        info = spine_and_stratum(phi2, extract_sets(phi2), [0.0])
        assert info["stratum"] == "singular"
        assert info["classified"] == pytest.approx(2.0)

    def test_spine_phi2_in_3d_is_a_line(self, phi2_3d):
        info = spine_and_stratum(phi2_3d, extract_sets(phi2_3d), [0.0, 0.0])
        assert info["spine_dim_estimate"] == 1
        assert info["stratum"] == "singular"
        assert len(info["spine_points"]) >= 3
        assert all(p[0] == 0.0 for p in info["spine_points"])

    def test_spine_psi1(self, psi1):
        info = spine_and_stratum(psi1, extract_sets(psi1), [0.0])
        assert info["stratum"] == "regular"
        assert info["spine_points"][0] == [0.0]

    def test_mean_flatness_needs_large_r(self, psi1):
        mu = measure_from_fb(extract_sets(psi1))
        with pytest.raises(GeometryError):
            mean_flatness_check(psi1, mu, [0.0, 0.0], 0.05, 5.0)
