import numpy as np
import pytest

from contactflow.core.errors import ChartMismatchError, ConfigError, TimeRangeError
from contactflow.dynamics.builtins import (
    ConstantHamiltonian,
    RotationHamiltonian,
    TorusFourierHamiltonian,
    ZonalHamiltonian,
    make_builtin,
)
from contactflow.dynamics.hamfield import (
    contact_vector_field,
    defining_residuals,
    difference,
    is_basic,
    poisson_bracket,
    reeb_derivative,
)
from contactflow.dynamics.profiles import TimeProfile


def test_bump_field_satisfies_the_defining_relations(bump, darboux_points):
    for t in (0.0, 0.4, 1.0):
        first, second = defining_residuals(contact_vector_field(bump), t, darboux_points)
        assert first <= 1e-6
        assert second <= 1e-6


def test_fourier_field_satisfies_the_defining_relations(torus, torus_points):
    H = TorusFourierHamiltonian(torus, [[1, 0, 1, 0.5, 0.2], [0, 2, -1, 0.3, 1.0]], c0=0.1)
    first, second = defining_residuals(H.field(), 0.5, torus_points)
    assert first <= 1e-6
    assert second <= 1e-6


def test_rotation_field_turns_the_plane(darboux):
    H = RotationHamiltonian(darboux, omega=2.0)
    points = np.array([[0.3, 0.0, 0.1], [0.0, 0.2, -0.4]])
    np.testing.assert_allclose(H.field()(0.5, points), [[0.0, 0.6, 0.0], [-0.4, 0.0, 0.0]], atol=1e-14)


def test_constant_hamiltonian_generates_the_reeb_field(torus, torus_points):
    field = ConstantHamiltonian(torus, 1.0).field()
    np.testing.assert_allclose(field(0.0, torus_points), torus.reeb(torus_points), atol=1e-14)


def test_reeb_derivative_is_the_z_derivative_on_darboux(bump, darboux_points):
    expected = bump.gradient(0.3, darboux_points)[:, -1]
    np.testing.assert_allclose(reeb_derivative(bump, 0.3, darboux_points), expected, atol=1e-14)


def test_basic_families_have_vanishing_reeb_derivative(torus, torus_points):
    zonal = ZonalHamiltonian(torus, 1.0, (0.5,), (0.2,))
    assert zonal.is_basic
    assert is_basic(zonal, torus_points, [0.0, 0.5, 1.0])
    generic = TorusFourierHamiltonian(torus, [[1, 0, 0, 1.0, 0.0]])
    assert not is_basic(generic, torus_points, [0.5])


def test_bracket_with_the_unit_hamiltonian_is_the_reeb_derivative(bump, darboux, darboux_points):
    one = ConstantHamiltonian(darboux, 1.0)
    bracket = poisson_bracket(bump, one, 0.5, darboux_points)
    np.testing.assert_allclose(bracket, reeb_derivative(bump, 0.5, darboux_points), atol=1e-6)


def test_bracket_is_antisymmetric(bump, darboux, darboux_points):
    other = RotationHamiltonian(darboux, omega=0.7)
    forward = poisson_bracket(bump, other, 0.2, darboux_points)
    backward = poisson_bracket(other, bump, 0.2, darboux_points)
    np.testing.assert_allclose(forward, -backward, atol=1e-6)


def test_bracket_needs_a_shared_chart(bump, torus):
    with pytest.raises(ChartMismatchError):
        poisson_bracket(bump, ConstantHamiltonian(torus, 1.0), 0.0, np.zeros((1, 3)))


def test_difference_subtracts_values(bump, darboux, darboux_points):
    other = RotationHamiltonian(darboux, profile=TimeProfile(offset=1.0, slope=1.0))
    gap = difference(bump, other)
    np.testing.assert_allclose(
        gap.value(0.7, darboux_points), bump.value(0.7, darboux_points) - other.value(0.7, darboux_points)
    )


def test_evaluation_outside_the_interval_fails(bump, darboux_points):
    with pytest.raises(TimeRangeError):
        bump.value(1.5, darboux_points)


def test_time_profile_integral_matches_quadrature():
    profile = TimeProfile(offset=1.0, slope=0.5, cos_coeffs=(0.3,), sin_coeffs=(0.0, 0.2))
    t = np.linspace(0.0, 0.8, 2001)
    assert float(profile.integral(0.0, 0.8)) == pytest.approx(np.trapezoid(profile.value(t), t), abs=1e-6)


def test_builtins_report_missing_parameters(darboux):
    with pytest.raises(ConfigError):
        make_builtin(darboux, "bump", {"radius": 0.3})
    with pytest.raises(ConfigError):
        make_builtin(darboux, "nonexistent", {})
