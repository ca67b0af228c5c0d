import numpy as np
import pytest
from pydantic import ValidationError

from contactflow.constructions.mainlemma import (
    default_loop_center,
    perturbation_sequence,
    predict_head,
    shorten_and_flatten,
    synthesize,
    transition_hamiltonians,
    transition_systems,
)
from contactflow.core.errors import PipelineError, StageBoundError, ThinningError
from contactflow.dynamics.builtins import RotationHamiltonian, TorusFourierHamiltonian, ZonalHamiltonian
from contactflow.dynamics.cds import ContactDynamicalSystem, group_difference
from contactflow.schemas.pipeline import PipelineTrace, Schedule


@pytest.fixture
def zonal(torus):
    return ContactDynamicalSystem.generate(ZonalHamiltonian(torus, 0.05, (0.05,), name="H"))


@pytest.fixture
def schedule():
    return Schedule(depth=2)


# ==========================================
# Schedule
# ==========================================


def test_default_schedule():
    schedule = Schedule(depth=3)
    assert schedule.epsilon(1) == pytest.approx(1.0 / 6.0)
    assert schedule.epsilon(2) == pytest.approx(1.0 / 24.0)
    assert [schedule.knot(i) for i in range(4)] == [0.0, 0.5, 0.75, 0.875]


@pytest.mark.parametrize(
    "kwargs",
    [
        {"depth": 1},
        {"depth": 2, "epsilons": [0.1, 0.2]},
        {"depth": 2, "knots": [0.5, 1.0]},
        {"depth": 3, "epsilons": [0.1, 0.05]},
    ],
)
def test_schedule_validation(kwargs):
    with pytest.raises(ValidationError):
        Schedule(**kwargs)


# ==========================================
# Inputs
# ==========================================


def test_constant_sequence(zonal, schedule):
    sequence = perturbation_sequence(zonal, schedule, 3, scale=0.0)
    assert len(sequence) == 3
    assert all(s is zonal for s in sequence)


def test_zonal_perturbations_stay_basic(zonal, schedule):
    sequence = perturbation_sequence(zonal, schedule, 3, scale=0.01)
    expected = [0.05 + 0.01 * (1.0 / 6.0) ** 2 * 0.25**m for m in range(3)]
    np.testing.assert_allclose([s.hamiltonian.g0 for s in sequence], expected)
    assert all(s.hamiltonian.is_basic for s in sequence)


def test_darboux_perturbations_add_a_bump(darboux, schedule):
    points = np.array([[0.5, 0.0, 0.0], [0.45, 0.05, 0.05], [0.1, 0.1, 0.1]])
    base = ContactDynamicalSystem.generate(RotationHamiltonian(darboux))
    first, second = perturbation_sequence(base, schedule, 2, scale=1.0)
    gap_first = first.hamiltonian.value(0.5, points) - base.hamiltonian.value(0.5, points)
    gap_second = second.hamiltonian.value(0.5, points) - base.hamiltonian.value(0.5, points)
    assert np.max(np.abs(gap_first)) > 0.0
    np.testing.assert_allclose(gap_second, 0.25 * gap_first, atol=1e-15)


def test_perturbation_sequence_needs_a_length(zonal, schedule):
    with pytest.raises(PipelineError):
        perturbation_sequence(zonal, schedule, 0)


def test_default_loop_center(darboux):
    center, radius = default_loop_center(darboux)
    np.testing.assert_allclose(center, [0.5, 0.0, 0.0], atol=1e-15)
    assert radius == pytest.approx(0.25)


# ==========================================
# Thinning and head prediction
# ==========================================


def test_thinning_keeps_close_successors(zonal, schedule, torus_grid):
    sequence = perturbation_sequence(zonal, schedule, 3, scale=0.01)
    trace = PipelineTrace(mode="near_input", epsilon=0.5, depth=2)
    kept, transitions = transition_systems(sequence, schedule, torus_grid, trace=trace)
    assert [s.name for s in kept] == [sequence[0].name, sequence[1].name]
    assert len(transitions) == 1
    assert not trace.failures()
    assert 2 in trace.delta_estimates


def test_thinning_runs_out_on_a_distant_sequence(torus, schedule, torus_grid):
    near = ContactDynamicalSystem.generate(ZonalHamiltonian(torus, 0.05, name="near"))
    far = ContactDynamicalSystem.generate(ZonalHamiltonian(torus, 0.5, name="far"))
    with pytest.raises(ThinningError):
        transition_systems([near, far], schedule, torus_grid)


def test_transition_hamiltonians_of_a_constant_sequence(zonal, schedule, torus_grid):
    assert len(transition_hamiltonians([zonal] * 3, schedule, torus_grid)) == 1


def test_vanishing_transitions_shorten_to_the_constant_isotopy(zonal, torus, torus_grid, torus_points):
    result = shorten_and_flatten(group_difference(zonal, zonal), 0.5, torus_grid)
    assert result.lemma is None
    assert result.flattening is None
    assert result.L is result.M
    gap = torus.point_distance(result.M.time_one(torus_points), torus_points)
    np.testing.assert_allclose(gap, 0.0, atol=1e-12)


def test_head_prediction(zonal, schedule, torus_grid):
    assert predict_head(zonal.hamiltonian, schedule, "near_input", 0.5, torus_grid)[0] == 1
    assert predict_head(zonal.hamiltonian, schedule, "near_identity", 0.5, torus_grid)[0] == 2
    with pytest.raises(StageBoundError):
        predict_head(zonal.hamiltonian, schedule, "near_input", 0.01, torus_grid)


# ==========================================
# Synthesis
# ==========================================


def test_synthesis_near_input_on_a_constant_sequence(zonal, schedule, torus_grid, torus_points):
    F, trace = synthesize(zonal, schedule, torus_grid, mode="near_input", epsilon=0.5, strict=True)
    assert trace.head_index == 1
    assert not trace.failures()
    quantities = {r.quantity for r in trace.records}
    assert {"head_end_gap", "time_one_gap", "F_minus_H_L1inf", "knot_continuity", "cauchy_c0_1_2"} <= quantities
    assert F.interval == (0.0, 1.0)
    gap = torus_grid.chart.point_distance(F.time_one(torus_points), zonal.time_one(torus_points))
    assert np.max(gap) <= 1e-9


def test_synthesis_rejects_bad_requests(zonal, torus, schedule, torus_grid):
    with pytest.raises(PipelineError):
        synthesize(zonal, schedule, torus_grid, mode="sideways")
    generic = ContactDynamicalSystem.generate(TorusFourierHamiltonian(torus, [[1, 0, 1, 0.1, 0.0]]))
    with pytest.raises(PipelineError):
        synthesize(generic, schedule, torus_grid, mode="near_input", strict=True)
    with pytest.raises(PipelineError):
        synthesize(zonal, schedule, torus_grid, mode="near_input", head_index=5)


def test_explicit_head_index_skips_the_prediction(zonal, schedule, torus_grid):
    _, trace = synthesize(zonal, schedule, torus_grid, mode="near_input", epsilon=0.5, head_index=2)
    assert trace.head_index == 2
    assert "head_prediction" not in {r.quantity for r in trace.records}


def test_unreachable_tolerance_fails_the_head_bound(zonal, schedule, torus_grid):
    with pytest.raises(StageBoundError):
        synthesize(zonal, schedule, torus_grid, mode="near_input", epsilon=0.01)


@pytest.mark.slow
def test_synthesis_near_identity_strict(zonal, schedule, torus_grid, torus_points):
    F, trace = synthesize(zonal, schedule, torus_grid, mode="near_identity", epsilon=0.5, strict=True)
    assert trace.head_index == 2
    assert not trace.failures()
    final = next(r for r in trace.records if r.quantity == "F_Linf")
    assert final.passed
    gap = torus_grid.chart.point_distance(F.time_one(torus_points), zonal.time_one(torus_points))
    assert np.max(gap) <= 1e-9
