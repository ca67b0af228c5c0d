import inspect

import numpy as np
import pytest

from contactflow.analysis.grids import make_grid, sample_points
from contactflow.analysis.metrics import displacement_check
from contactflow.constructions.nonsmooth import (
    CutoffEta,
    RhoHamiltonian,
    RhoProfile,
    annular_sector,
    axis_flow_check,
    closed_form_flow,
    conjugate_fields_example,
    ellipse_ratio,
    gallery_chart,
    gallery_support,
    growth_constant,
    homeomorphism_checks,
    invariance_radius,
    limit_homeomorphism,
    lipschitz_certificate,
    rotation_system,
    slab_box,
    split_field,
    truncation_sequence_diagnostics,
)
from contactflow.core.config import settings
from contactflow.core.errors import (
    CertificateRangeError,
    ChartError,
    DomainError,
    GalleryError,
    GridCoverageError,
    TimeRangeError,
)
from contactflow.dynamics.flow import flow_of


@pytest.fixture
def profile():
    return RhoProfile()


@pytest.fixture
def eta():
    return CutoffEta()


@pytest.fixture
def chart(profile, eta):
    return gallery_chart(profile, eta)


@pytest.fixture
def slab_points(chart, profile, eta):
    return sample_points(chart, 8, seed=3, box=slab_box(1, profile, invariance_radius(profile, eta, 3)))


# ==========================================
# Profiles
# ==========================================


@pytest.mark.parametrize(
    "kwargs",
    [
        {"exponent": 2.5},
        {"exponent": 0.0},
        {"splice": 0.95},
        {"first_radius": 0.6},
        {"ratio": 1.0},
    ],
)
def test_profile_validation(kwargs):
    with pytest.raises(GalleryError):
        RhoProfile(**kwargs)


def test_truncations_match_the_profile_away_from_the_axis(profile):
    r = np.array([0.3, 0.5, 0.7])
    np.testing.assert_allclose(profile.rho(r, 2), profile.rho(r))
    np.testing.assert_allclose(profile.rho([0.01, 0.02], 2), 0.0)
    assert profile.radius(3) == pytest.approx(0.0625)


def test_power_segment_integral(profile):
    # I(r) - I(splice) = splice - r on the power segment for a = 1
    gap = profile.integral(np.array([0.1, 0.3])) - profile.integral(0.5)
    np.testing.assert_allclose(gap, [0.4, 0.2], atol=1e-12)
    assert profile.mass_below(0.2) == pytest.approx(0.2)


def test_invariant_slab_sits_inside_the_plateau(profile, eta):
    u = invariance_radius(profile, eta)
    assert 0.0 < u < eta.plateau - float(profile.integral(0.0)) + 1e-9
    assert invariance_radius(profile, eta, 3) >= u
    assert growth_constant(profile, eta) > 0.0


# ==========================================
# Fields and explicit flows
# ==========================================


def test_split_field_recovers_the_contact_field(chart, profile, eta):
    H = RhoHamiltonian(chart, profile, eta, 3)
    points = sample_points(chart, 32, seed=5, box=gallery_support(1, profile, eta))
    Y, Z = split_field(H, points)
    np.testing.assert_allclose(Y - Z, H.field()(0.0, points), atol=1e-12)


def test_rho_family_rejects_the_torus(torus, profile, eta):
    with pytest.raises(ChartError):
        RhoHamiltonian(torus, profile, eta)


def test_closed_form_matches_the_integrated_truncation(chart, profile, eta, slab_points):
    expected, g = closed_form_flow(profile, eta, 1.0, slab_points, j=3)
    images = flow_of(RhoHamiltonian(chart, profile, eta, 3))(1.0, slab_points)
    np.testing.assert_allclose(images, expected, atol=1e-5)
    np.testing.assert_allclose(np.linalg.norm(expected[:, :2], axis=1), np.linalg.norm(slab_points[:, :2], axis=1))
    assert np.all(g == 0.0)


def test_closed_form_inverse_undoes_the_map(chart, profile, eta):
    u = invariance_radius(profile, eta, 3)
    box = slab_box(1, profile, u)
    box[-1] = (-u, 0.0)
    points = sample_points(chart, 8, seed=3, box=box)
    images, _ = closed_form_flow(profile, eta, 0.3, points, j=3)
    back, _ = closed_form_flow(profile, eta, 0.3, images, j=3, inverse=True)
    np.testing.assert_allclose(back, points, atol=1e-12)


def test_closed_form_refuses_points_off_the_slab(profile, eta):
    with pytest.raises(DomainError):
        closed_form_flow(profile, eta, 1.0, [[0.2, 0.0, 0.9]])
    with pytest.raises(TimeRangeError):
        closed_form_flow(profile, eta, 1.5, [[0.2, 0.0, 0.0]])


def test_limit_map_on_the_slab_and_the_axis(chart, profile, eta):
    phi = limit_homeomorphism(profile, eta, chart, depth=3)
    assert not phi.smooth
    points = sample_points(chart, 8, seed=4, box=slab_box(1, profile, invariance_radius(profile, eta)))
    expected, _ = closed_form_flow(profile, eta, 1.0, points)
    np.testing.assert_allclose(phi(points), expected, atol=1e-14)

    axis = np.array([[0.0, 0.0, 1.5]])
    image = phi(axis)
    assert np.all(image[:, :2] == 0.0)
    np.testing.assert_allclose(phi.apply_inverse(image)[0], axis, atol=1e-6)

    with pytest.raises(CertificateRangeError):
        phi(np.array([[1e-9, 0.0, 1.5]]))


# ==========================================
# Diagnostics
# ==========================================


def test_axis_is_invariant(chart, profile, eta):
    report = axis_flow_check(profile, eta, chart, 3, count=5)
    assert report.planar_drift <= 1e-12
    assert report.ode_gap <= 1e-6
    assert report.axis_speed < report.limit_axis_speed


def test_limit_map_is_a_homeomorphism_of_the_slab(chart, profile, eta):
    report = homeomorphism_checks(profile, eta, chart, count=500)
    assert report.injective
    assert report.collisions == 0
    assert report.round_trip_residual <= 1e-10
    assert report.surjectivity_residual <= 1e-10
    assert report.radius_change <= 1e-12


def test_truncations_converge(chart, profile, eta):
    grid = make_grid(chart, 6, gallery_support(1, profile, eta))
    report = truncation_sequence_diagnostics(profile, eta, chart, [3, 2], grid, count=16, times=[0.0, 1.0])
    assert [row.j for row in report.indices] == [2, 3]
    assert report.radii_monotone
    spread = np.exp(report.growth_constant)
    for row in report.indices:
        assert row.conformal_on_invariant_slab <= 1e-9
        assert row.radius_ratio_max <= spread + 1e-6
        assert row.radius_ratio_min >= 1.0 / spread - 1e-6
    (pair,) = report.pairs
    assert (pair.j, pair.k) == (2, 3)
    assert pair.hamiltonian_gap <= pair.hamiltonian_bound + 1e-12


def test_truncation_diagnostics_need_a_covering_grid(chart, profile, eta):
    small = make_grid(chart, 4, slab_box(1, profile, 0.2))
    with pytest.raises(GridCoverageError):
        truncation_sequence_diagnostics(profile, eta, chart, [2], small)
    with pytest.raises(GalleryError):
        truncation_sequence_diagnostics(profile, eta, chart, [], small)


# ==========================================
# Certificate
# ==========================================


def test_lipschitz_certificate_rows(profile, eta):
    ks = [1, 2, 5, 10]
    certificate = lipschitz_certificate(profile, eta, 0.5, ks=ks)
    k = np.asarray(ks, dtype=float)
    np.testing.assert_allclose([row.s_k for row in certificate.rows], 1.0 / (2.0 * np.pi * k))
    np.testing.assert_allclose([row.s_k_prime for row in certificate.rows], 1.0 / (2.0 * np.pi * k + np.pi))
    # images on opposite rays: the chord quotient is 4k + 1 for a = 1
    np.testing.assert_allclose([row.chord_bound for row in certificate.rows], 4.0 * k + 1.0, rtol=1e-12)
    for row in certificate.rows:
        assert row.quotient >= row.chord_bound * (1.0 - 1e-12)
        assert row.passed
        assert row.gap_ok
    assert certificate.monotone
    assert certificate.passed
    assert certificate.excluded == []


def test_certificate_rejects_bad_exponents(profile, eta):
    with pytest.raises(GalleryError):
        lipschitz_certificate(profile, eta, 1.0, ks=[1])
    with pytest.raises(GalleryError):
        lipschitz_certificate(profile, eta, 0.0, ks=[1])


def test_certificate_spreads_default_indices(profile, eta):
    certificate = lipschitz_certificate(profile, eta, 0.5, kmax=100, count=5)
    assert certificate.rows[0].k == 1
    assert certificate.rows[-1].k == 100
    assert certificate.passed


# ==========================================
# Conjugate fields and displacement
# ==========================================


def test_level_sets_are_ellipses_of_ratio_four():
    assert ellipse_ratio() == pytest.approx(4.0, abs=1e-10)


@pytest.mark.slow
def test_conjugate_fields(chart, profile, eta):
    H, F, report = conjugate_fields_example(profile, eta, chart, count=10, times=2)
    assert H.chart is F.chart
    assert report.definitional_gap <= 1e-12
    assert report.conjugacy_residual <= 1e-4
    assert report.gradient_near_axis <= 1e-4
    assert report.ellipse_ratio == pytest.approx(4.0, abs=1e-10)
    assert (report.samples, report.times) == (10, 2)


def test_conjugacy_defaults_to_a_thousand_seeds():
    defaults = inspect.signature(conjugate_fields_example).parameters
    assert defaults["count"].default == settings.SAMPLE_POINTS == 1000
    assert defaults["times"].default == 10


def test_rotation_displaces_the_sector(darboux, torus):
    K = annular_sector(darboux)
    assert displacement_check(rotation_system(darboux).flow, K)
    with pytest.raises(ChartError):
        annular_sector(torus)
