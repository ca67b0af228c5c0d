import numpy as np
import pytest

from contactflow.analysis.grids import sample_points
from contactflow.core.errors import ChartError, DomainError
from contactflow.dynamics.charts import (
    ChartKind,
    chart_from_spec,
    form_derivative,
    form_residuals,
    make_chart,
    make_form_scale,
    reeb_field,
    volume_density,
)


def test_reeb_field_normalises_the_form(darboux, darboux2, torus):
    for chart in (darboux, darboux2, torus):
        points = sample_points(chart, 50, seed=1)
        pairing, contraction = form_residuals(chart, points)
        assert pairing <= 1e-12
        assert contraction <= 1e-12


@pytest.mark.parametrize("name", ["linear_z", "sine_z", "radial"])
def test_reeb_field_of_rescaled_form(name):
    chart = make_chart(ChartKind.DARBOUX, form_scale=make_form_scale(name, 0.3))
    points = sample_points(chart, 50, seed=2)
    pairing, contraction = form_residuals(chart, points)
    assert pairing <= 1e-10
    assert contraction <= 1e-10


def test_torus_reeb_field_is_explicit(torus):
    points = sample_points(torus, 10, seed=3)
    z = points[:, 2]
    expected = np.stack([np.cos(z), -np.sin(z), np.zeros_like(z)], axis=1)
    np.testing.assert_allclose(torus.reeb(points), expected, atol=1e-14)


def test_polar_volume_density_is_radius(darboux):
    coords = np.array([[0.3, 1.0, 0.2], [0.7, 4.0, -0.5]])
    np.testing.assert_allclose(darboux.polar_volume_density(coords), [0.3, 0.7])


def test_polar_volume_density_in_dimension_five(darboux2):
    coords = np.array([[0.5, 0.0, 0.4, 2.0, 0.1]])
    np.testing.assert_allclose(darboux2.polar_volume_density(coords), [2.0 * 0.5 * 0.4])


def test_polar_coordinates_match_cartesian(darboux):
    points = np.array([[0.0, 0.5, 0.1]])
    np.testing.assert_allclose(darboux.to_polar(points), [[0.5, np.pi / 2, 0.1]])


def test_torus_distance_wraps(torus):
    p = np.array([[0.05, 0.0, 0.0]])
    q = np.array([[2 * np.pi - 0.05, 0.0, 0.0]])
    assert torus.point_distance(p, q)[0] == pytest.approx(0.1)


def test_require_inside_rejects_points_off_the_chart(darboux):
    with pytest.raises(DomainError) as excinfo:
        darboux.require_inside(np.array([[2.0, 0.0, 0.0], [0.1, 0.1, 0.0]]))
    assert excinfo.value.points.shape == (1, 3)


def test_make_chart_rejects_bad_input():
    with pytest.raises(ChartError):
        make_chart("sphere")
    with pytest.raises(ChartError):
        make_chart(ChartKind.TORUS3, n=2)
    with pytest.raises(ChartError):
        make_chart(ChartKind.DARBOUX, [(0.0, 1.0), (0.0, 1.0), (1.0, 1.0)])
    with pytest.raises(ChartError):
        make_chart(ChartKind.DARBOUX, [(-0.5, 1.0), (0.0, 1.0), (0.0, 1.0)])


def test_chart_spec_round_trips_through_the_schema(darboux):
    chart = make_chart(ChartKind.DARBOUX, form_scale=make_form_scale("linear_z", 0.5))
    rebuilt = chart_from_spec(chart.spec)
    assert rebuilt.same_as(chart)
    assert not rebuilt.same_as(darboux)


def test_points_of_the_wrong_arity_are_rejected(torus):
    with pytest.raises(ChartError):
        torus.reeb(np.zeros((2, 5)))


def test_reeb_field_evaluator(darboux, darboux_points):
    np.testing.assert_allclose(reeb_field(darboux)(darboux_points), np.tile([0.0, 0.0, 1.0], (24, 1)))


def test_volume_density_of_the_standard_and_scaled_forms(darboux2):
    points = sample_points(darboux2, 5, seed=4)
    np.testing.assert_allclose(volume_density(darboux2, points), 2.0)
    scaled = make_chart(ChartKind.DARBOUX, form_scale=make_form_scale("linear_z", 0.3))
    points = sample_points(scaled, 5, seed=4)
    np.testing.assert_allclose(volume_density(scaled, points), np.exp(2.0 * 0.3 * points[:, -1]))


def test_polar_density_is_radius_times_cartesian_density(darboux):
    coords = np.array([[0.3, 0.4, 0.1], [0.7, 2.0, -0.2]])
    cartesian = volume_density(darboux, darboux.from_polar(coords))
    np.testing.assert_allclose(cartesian, 1.0)
    np.testing.assert_allclose(darboux.polar_volume_density(coords), coords[:, 0] * cartesian)


def test_form_derivative_is_antisymmetric(darboux, torus):
    for chart in (darboux, torus, make_chart(ChartKind.DARBOUX, form_scale=make_form_scale("radial", 0.2))):
        omega = form_derivative(chart, sample_points(chart, 10, seed=6))
        np.testing.assert_allclose(omega, -np.swapaxes(omega, 1, 2), atol=1e-15)
    np.testing.assert_allclose(form_derivative(darboux, np.zeros((1, 3)))[0, 0, 1], 1.0)


def test_scaled_form_derivative_matches_the_product_rule():
    chart = make_chart(ChartKind.DARBOUX, form_scale=make_form_scale("linear_z", 0.5))
    point = np.array([[0.3, -0.2, 0.4]])
    # d(e^(cz) alpha) = e^(cz) (c dz ^ alpha + d alpha)
    alpha = np.array([0.1, 0.15, 1.0])
    expected = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    expected[2, :] += 0.5 * alpha
    expected[:, 2] -= 0.5 * alpha
    np.testing.assert_allclose(form_derivative(chart, point)[0], np.exp(0.2) * expected, atol=1e-12)


def test_polar_round_trip(darboux2):
    points = sample_points(darboux2, 10, seed=8)
    np.testing.assert_allclose(darboux2.from_polar(darboux2.to_polar(points)), points, atol=1e-14)
    assert darboux2.to_polar(np.zeros((1, 5)))[0, 1] == 0.0
