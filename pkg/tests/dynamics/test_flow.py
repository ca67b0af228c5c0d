import numpy as np
import pytest

from contactflow.analysis.grids import sample_points
from contactflow.core.errors import EmptySampleError, FlowEscapeError, PairingError, TimeRangeError
from contactflow.dynamics.builtins import (
    ConstantHamiltonian,
    RotationHamiltonian,
    TorusFourierHamiltonian,
    ZonalHamiltonian,
)
from contactflow.dynamics.cds import identity_system
from contactflow.dynamics.flow import (
    ClosedFormFlow,
    IntegratedFlow,
    conformal_factor,
    flow_of,
    integrate_flow,
    pullback_residual,
    snapshot_rows,
    time_grid,
)


def test_unit_hamiltonian_on_the_torus_follows_reeb_orbits(torus, torus_points):
    flow = flow_of(ConstantHamiltonian(torus, 1.0))
    assert isinstance(flow, ClosedFormFlow)
    t = 0.7
    z = torus_points[:, 2]
    expected = torus_points + t * np.stack([np.cos(z), -np.sin(z), np.zeros_like(z)], axis=1)
    images, h = flow.evaluate(t, torus_points)
    np.testing.assert_allclose(images, expected, atol=1e-14)
    np.testing.assert_array_equal(h, 0.0)


def test_integrated_reeb_flow_matches_the_closed_form(torus, torus_points):
    H = ConstantHamiltonian(torus, 1.0)
    integrated = integrate_flow(H.field(), step=1e-2)
    np.testing.assert_allclose(integrated(1.0, torus_points), flow_of(H)(1.0, torus_points), atol=1e-10)


def test_integrated_zonal_flow_matches_the_closed_form(torus, torus_points):
    H = ZonalHamiltonian(torus, 1.0, (0.5,), (0.25,))
    integrated = integrate_flow(H.field())
    for t in (0.3, 1.0):
        images, h = integrated.evaluate(t, torus_points)
        assert np.max(torus.point_distance(images, flow_of(H)(t, torus_points))) <= 1e-6
        assert np.max(np.abs(h)) <= 1e-12


def test_halving_the_step_improves_the_error_by_eight(darboux, darboux_points):
    H = RotationHamiltonian(darboux, omega=1.0)
    exact = flow_of(H)(1.0, darboux_points)
    errors = [
        float(np.max(darboux.point_distance(integrate_flow(H.field(), step=s)(1.0, darboux_points), exact)))
        for s in (0.1, 0.05)
    ]
    assert errors[1] > 0.0
    assert errors[0] / errors[1] >= 8.0


def test_identity_flow_pulls_back_the_form_exactly(darboux, darboux_points):
    flow = identity_system(darboux).flow
    assert pullback_residual(flow, None, 1.0, darboux_points) <= 1e-10


def test_bump_flow_satisfies_the_pullback_identity(bump, darboux_points):
    flow = flow_of(bump)
    assert isinstance(flow, IntegratedFlow)
    h = conformal_factor(bump, flow)
    assert np.max(np.abs(h(1.0, darboux_points[:10]))) > 1e-4
    assert pullback_residual(flow, h, 1.0, darboux_points[:10]) <= 1e-5


def test_generic_torus_flow_satisfies_the_pullback_identity(torus):
    H = TorusFourierHamiltonian(torus, [[1, 0, 1, 0.3, 0.0], [0, 1, 0, 0.2, 0.5]])
    points = sample_points(torus, 10, seed=4)
    flow = flow_of(H)
    assert pullback_residual(flow, None, 0.6, points) <= 1e-5


def test_strict_torus_flow_has_no_conformal_factor(torus):
    H = ZonalHamiltonian(torus, 0.5, (0.3,))
    points = sample_points(torus, 10, seed=5)
    flow = integrate_flow(H.field())
    assert pullback_residual(flow, None, 1.0, points) <= 1e-5
    assert np.max(np.abs(flow.conformal(1.0, points))) <= 1e-6


def test_inverse_undoes_the_forward_map(bump, darboux_points):
    flow = flow_of(bump)
    images = flow(0.8, darboux_points)
    np.testing.assert_allclose(flow.inverse(0.8, images), darboux_points, atol=1e-8)


def test_trajectory_shapes_and_values(bump, darboux_points):
    flow = flow_of(bump)
    times = [0.0, 0.25, 1.0]
    images, factors = flow.trajectory(darboux_points, times)
    assert images.shape == (3, len(darboux_points), 3)
    assert factors.shape == (3, len(darboux_points))
    np.testing.assert_array_equal(images[0], darboux_points)
    np.testing.assert_allclose(images[1], flow(0.25, darboux_points), atol=1e-12)


def test_trajectory_leaving_the_chart_is_reported(darboux):
    flow = integrate_flow(ConstantHamiltonian(darboux, 1.0).field(), step=1e-2)
    with pytest.raises(FlowEscapeError) as excinfo:
        flow(1.0, np.array([[0.1, 0.1, 0.5]]))
    assert 0.0 < excinfo.value.time <= 1.0


def test_flow_rejects_times_outside_the_interval(bump, darboux_points):
    with pytest.raises(TimeRangeError):
        flow_of(bump)(1.2, darboux_points)


def test_pullback_needs_samples(bump):
    with pytest.raises(EmptySampleError):
        pullback_residual(flow_of(bump), None, 1.0, np.empty((0, 3)))


def test_conformal_factor_belongs_to_its_hamiltonian(bump, darboux):
    with pytest.raises(PairingError):
        conformal_factor(bump, flow_of(RotationHamiltonian(darboux)))


def test_time_grid_keeps_breakpoints():
    nodes = time_grid((0.0, 1.0), (0.0, 0.33, 1.0), 0.1)
    assert 0.33 in nodes
    assert nodes[0] == 0.0 and nodes[-1] == 1.0
    assert np.max(np.diff(nodes)) <= 0.1 + 1e-12


def test_snapshot_rows_name_every_coordinate(torus, torus_points):
    rows = snapshot_rows(flow_of(ConstantHamiltonian(torus, 1.0)), torus_points[:2], [0.0, 1.0])
    assert len(rows) == 4
    assert list(rows[0]) == ["t", "in_x", "in_y", "in_z", "out_x", "out_y", "out_z", "h"]
