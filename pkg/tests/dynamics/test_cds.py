import numpy as np
import pytest

from contactflow.core.config import settings
from contactflow.core.errors import ChartError, ChartMismatchError, PairingError
from contactflow.dynamics.builtins import ConstantHamiltonian, RotationHamiltonian, ZonalHamiltonian
from contactflow.dynamics.cds import (
    Automorphism,
    ContactDynamicalSystem,
    Provenance,
    change_form,
    compose,
    conjugate,
    cross_check,
    group_difference,
    identity_system,
    invert,
    push_forward,
    reeb_direction_residual,
    uniqueness_diagnostic,
)
from contactflow.dynamics.charts import make_form_scale
from contactflow.dynamics.flow import pullback_residual


@pytest.fixture
def rotation(darboux):
    return ContactDynamicalSystem.generate(RotationHamiltonian(darboux, omega=1.5), name="A")


@pytest.fixture
def lift(darboux):
    return ContactDynamicalSystem.generate(ConstantHamiltonian(darboux, 0.3), name="B")


def test_generate_prefers_the_closed_form(rotation):
    assert rotation.provenance is Provenance.DIRECT
    assert rotation.flow.hamiltonian is rotation.hamiltonian
    assert rotation.interval == (0.0, 1.0)


def test_identity_system_is_stationary(darboux, darboux_points):
    system = identity_system(darboux)
    np.testing.assert_array_equal(system.time_one(darboux_points), darboux_points)
    np.testing.assert_array_equal(system.conformal_factor(1.0, darboux_points), 0.0)


def test_compose_runs_the_flows_one_after_another(rotation, lift, darboux_points):
    AB = compose(rotation, lift)
    assert AB.provenance is Provenance.ALGEBRAIC
    expected = rotation.time_one(lift.time_one(darboux_points))
    np.testing.assert_allclose(AB.time_one(darboux_points), expected, atol=1e-14)


def test_composed_hamiltonians_add_for_commuting_flows(rotation, lift, darboux_points):
    AB = compose(rotation, lift)
    expected = rotation.hamiltonian.value(0.5, darboux_points) + 0.3
    np.testing.assert_allclose(AB.hamiltonian.value(0.5, darboux_points), expected, atol=1e-12)


def test_composition_with_the_inverse_is_trivial(bump, darboux_points):
    A = ContactDynamicalSystem.generate(bump)
    trivial = compose(A, invert(A))
    for t in (0.25, 1.0):
        assert np.max(np.abs(trivial.hamiltonian.value(t, darboux_points[:8]))) <= 1e-6
        np.testing.assert_allclose(trivial.flow(t, darboux_points[:8]), darboux_points[:8], atol=1e-8)


def test_group_difference_is_inverse_then_compose(rotation, lift, darboux_points):
    D = group_difference(rotation, lift)
    expected = rotation.flow.inverse(0.6, lift.flow(0.6, darboux_points))
    np.testing.assert_allclose(D.flow(0.6, darboux_points), expected, atol=1e-14)


def test_composite_flows_cross_check_against_integration(rotation, lift, darboux_points):
    for system in (compose(rotation, lift), invert(rotation), group_difference(lift, rotation)):
        assert cross_check(system, darboux_points[:10], [0.5, 1.0], step=1e-2) <= 1e-5


def test_torus_composite_cross_checks(torus, torus_points):
    A = ContactDynamicalSystem.generate(ZonalHamiltonian(torus, 1.0, (0.5,)))
    B = ContactDynamicalSystem.generate(ConstantHamiltonian(torus, 0.7))
    assert cross_check(compose(A, B), torus_points[:10], [1.0], step=1e-2) <= 1e-5


def test_scaling_pulls_the_form_back_with_its_factor(darboux):
    psi = Automorphism.scaling(darboux, 1.2)
    points = np.array([[0.1, 0.2, 0.05], [-0.3, 0.1, -0.2]])
    assert reeb_direction_residual(psi, points) <= 1e-8
    np.testing.assert_allclose(psi.conformal(points), 2.0 * np.log(1.2))


def test_conjugation_by_a_scaling(rotation, darboux_points):
    psi = Automorphism.scaling(rotation.chart, 0.8)
    C = conjugate(rotation, psi)
    expected = psi.inverted()(rotation.flow(0.5, psi(darboux_points)))
    np.testing.assert_allclose(C.flow(0.5, darboux_points), expected, atol=1e-14)
    assert cross_check(C, darboux_points[:10], [1.0], step=1e-2) <= 1e-5


def test_conjugation_by_a_z_translation_keeps_the_rotation(rotation, darboux_points):
    C = conjugate(rotation, Automorphism.z_translation(rotation.chart, 0.1))
    np.testing.assert_allclose(C.time_one(darboux_points), rotation.time_one(darboux_points), atol=1e-14)


def test_push_forward_is_based_at_the_map(rotation, darboux_points):
    psi = Automorphism.heisenberg(rotation.chart, [0.1], [-0.05])
    P = push_forward(rotation, psi)
    assert not P.flow.is_identity_based
    np.testing.assert_allclose(P.flow(0.0, darboux_points), psi(darboux_points), atol=1e-14)


def test_group_operations_need_identity_based_systems(rotation):
    based = push_forward(rotation, Automorphism.z_translation(rotation.chart, 0.1))
    with pytest.raises(PairingError):
        compose(based, rotation)


def test_group_operations_need_a_shared_chart(rotation, torus):
    other = ContactDynamicalSystem.generate(ConstantHamiltonian(torus, 1.0))
    with pytest.raises(ChartMismatchError):
        compose(rotation, other)


def test_torus_automorphisms_are_chart_specific(darboux, torus):
    with pytest.raises(ChartError):
        Automorphism.torus_translation(darboux, 0.1, 0.2)
    with pytest.raises(ChartError):
        Automorphism.scaling(torus, 2.0)


def test_change_of_form_keeps_the_isotopy(rotation, darboux_points):
    scale = make_form_scale("linear_z", 0.2)
    rescaled = change_form(rotation, scale)
    assert rescaled.chart.form_scale is scale
    np.testing.assert_allclose(rescaled.time_one(darboux_points), rotation.time_one(darboux_points))
    assert pullback_residual(rescaled.flow, None, 1.0, darboux_points[:6]) <= 1e-6


def test_uniqueness_diagnostic_for_reeb_translations(lift, darboux, darboux_grid, darboux_points):
    slower = ContactDynamicalSystem.generate(ConstantHamiltonian(darboux, 0.1), name="C")
    knots = np.linspace(0.0, 1.0, 5)
    ratio = uniqueness_diagnostic(lift, slower, darboux_grid, knots, darboux_points)
    assert ratio == pytest.approx(1.0, rel=1e-6)
    assert uniqueness_diagnostic(lift, lift, darboux_grid, knots, darboux_points) == 0.0


def test_double_inverse_is_the_system(bump, darboux_points):
    A = ContactDynamicalSystem.generate(bump)
    twice = invert(invert(A))
    tolerance = 2.0 * settings.CROSS_CHECK_TOLERANCE
    for t in (0.25, 1.0):
        for left, right in (
            (twice.hamiltonian.value(t, darboux_points), A.hamiltonian.value(t, darboux_points)),
            (twice.flow(t, darboux_points), A.flow(t, darboux_points)),
            (twice.conformal_factor(t, darboux_points), A.conformal_factor(t, darboux_points)),
        ):
            np.testing.assert_allclose(left, right, atol=tolerance)


@pytest.fixture
def groupings(rotation, lift, bump):
    C = ContactDynamicalSystem.generate(bump, name="C")
    return compose(compose(rotation, lift), C), compose(rotation, compose(lift, C))


def test_composition_is_associative(groupings, darboux_points):
    left, right = groupings
    points = darboux_points[:6]
    np.testing.assert_allclose(left.time_one(points), right.time_one(points), atol=1e-12)
    np.testing.assert_allclose(left.hamiltonian.value(0.5, points), right.hamiltonian.value(0.5, points), atol=1e-8)


@pytest.mark.slow
def test_both_groupings_cross_check(groupings, darboux_points):
    for system in groupings:
        assert cross_check(system, darboux_points[:4], [0.5, 1.0], step=1e-2) <= settings.CROSS_CHECK_TOLERANCE
