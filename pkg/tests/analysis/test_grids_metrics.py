import numpy as np
import pytest

from contactflow.analysis.grids import inner_box, make_grid, segment_knots, time_knots
from contactflow.analysis.metrics import (
    c0_distance,
    contact_distance,
    displacement_check,
    energy_capacity_envelope,
    energy_upper_bound,
    ham_norm,
    lipschitz_in_time,
)
from contactflow.constructions.nonsmooth import annular_sector, rotation_system
from contactflow.core.errors import CandidateError, ChartError, GridCoverageError
from contactflow.dynamics.builtins import (
    ConstantHamiltonian,
    RotationHamiltonian,
    TimeProfileHamiltonian,
    zero_hamiltonian,
)
from contactflow.dynamics.cds import ContactDynamicalSystem, identity_system
from contactflow.dynamics.flow import FlowMap
from contactflow.dynamics.profiles import TimeProfile


# ==========================================
# Grids
# ==========================================


def test_grid_weights_integrate_the_volume(darboux, torus):
    assert make_grid(darboux, 8).total_volume == pytest.approx(2.0 * np.pi, rel=1e-12)
    assert make_grid(torus, 4).total_volume == pytest.approx((2.0 * np.pi) ** 3, rel=1e-12)


def test_grid_rejects_boxes_off_the_chart(darboux):
    with pytest.raises(ChartError):
        make_grid(darboux, 4, [(0.0, 2.0), (0.0, 1.0), (-0.5, 0.5)])
    with pytest.raises(ChartError):
        make_grid(darboux, [4, 4])


def test_full_grids_have_no_interior_faces(darboux_grid, darboux):
    assert len(darboux_grid.boundary_points()) == 0
    inner = make_grid(darboux, 4, inner_box(darboux))
    assert len(inner.boundary_points()) > 0
    assert np.all(darboux.contains(inner.boundary_points()))


def test_segment_knots_refine_short_segments():
    knots = segment_knots((0.0, 1.0), [0.1], per_segment=9)
    assert knots[0] == 0.0 and knots[-1] == 1.0
    assert 0.1 in knots
    assert np.sum(knots <= 0.1) >= 9
    assert np.all(np.diff(knots) > 0.0)


# ==========================================
# Norms
# ==========================================


def test_constant_norm_is_its_absolute_value(torus, torus_grid):
    H = ConstantHamiltonian(torus, -0.7)
    for kind in ("osc_mean_t", "L1inf", "Linf"):
        assert ham_norm(H, kind, torus_grid).value == pytest.approx(0.7, abs=1e-12)


def test_zero_hamiltonian_has_zero_norm(darboux, darboux_grid):
    assert ham_norm(zero_hamiltonian(darboux), "L1inf", darboux_grid).value == 0.0


def test_integrated_norm_is_bounded_by_the_sup(bump, darboux_grid):
    integrated = ham_norm(bump, "L1inf", darboux_grid).value
    sup = ham_norm(bump, "Linf", darboux_grid).value
    assert 0.0 < integrated <= sup + 1e-12


def test_norm_reports_carry_the_grid(bump, darboux_grid):
    report = ham_norm(bump, "Linf", darboux_grid, knots=time_knots((0.0, 1.0), 5))
    assert report.grid.time_knots == 5
    assert report.grid_hash == report.grid.digest()


def test_support_outside_the_grid_is_rejected(bump, darboux):
    small = make_grid(darboux, 4, inner_box(darboux, 0.3))
    with pytest.raises(GridCoverageError):
        ham_norm(bump, "L1inf", small)


def test_lipschitz_in_time_of_a_linear_profile(darboux, darboux_grid):
    H = RotationHamiltonian(darboux, omega=2.0, profile=TimeProfile(offset=0.0, slope=1.0))
    expected = float(np.max(np.sum(darboux_grid.points[:, :-1] ** 2, axis=1)))
    assert lipschitz_in_time(H, darboux_grid) == pytest.approx(expected, rel=1e-9)


# ==========================================
# Distances and energy
# ==========================================


def test_contact_distance_to_a_reeb_translation(torus, torus_grid):
    tau = 0.25
    A = identity_system(torus)
    B = ContactDynamicalSystem.generate(ConstantHamiltonian(torus, tau))
    report = contact_distance(A, B, "L1inf", torus_grid, points=torus_grid.points[::7])
    assert report.c0_component == pytest.approx(2.0 * tau, rel=1e-9)
    assert report.conformal_component == pytest.approx(0.0, abs=1e-12)
    assert report.hamiltonian_component == pytest.approx(tau, rel=1e-9)
    assert report.total == pytest.approx(3.0 * tau, rel=1e-9)


def test_c0_distance_is_zero_on_itself(bump, darboux_points):
    A = ContactDynamicalSystem.generate(bump)
    assert c0_distance(A.flow, A.flow, darboux_points[:6], [0.5, 1.0], symmetric=True) == 0.0


class _SlidingFlow(FlowMap):
    """phi_t shifts z by 0.1 (1 - t) and phi_t^-1 by 0.1 t, so the two gaps peak at opposite ends."""

    def _forward(self, t, points):
        return points + np.array([0.0, 0.0, 0.1 * (1.0 - t)]), np.zeros(len(points))

    def _inverse(self, t, points):
        return points + np.array([0.0, 0.0, 0.1 * t]), np.zeros(len(points))


def test_symmetric_c0_distance_takes_the_max_of_the_sum(darboux, darboux_points):
    sliding = _SlidingFlow(darboux, (0.0, 1.0), name="sliding")
    fixed = identity_system(darboux).flow
    times = [0.0, 0.5, 1.0]
    assert c0_distance(sliding, fixed, darboux_points, times) == pytest.approx(0.1, rel=1e-12)
    assert c0_distance(sliding, fixed, darboux_points, times, symmetric=True) == pytest.approx(0.1, rel=1e-12)


def test_energy_bound_picks_the_cheapest_matching_candidate(torus, torus_grid):
    target = ContactDynamicalSystem.generate(ConstantHamiltonian(torus, 0.5))
    cheap = ContactDynamicalSystem.generate(ConstantHamiltonian(torus, 0.5), name="cheap")
    wavy = ContactDynamicalSystem.generate(
        TimeProfileHamiltonian(torus, TimeProfile(offset=0.5, cos_coeffs=(1.0,))), name="wavy"
    )
    wrong = ContactDynamicalSystem.generate(ConstantHamiltonian(torus, 0.6), name="wrong")
    samples = torus_grid.points[::11]
    estimate = energy_upper_bound(target, [wavy, wrong, cheap], torus_grid, samples=samples)
    assert estimate.witness == "cheap"
    assert estimate.witness_index == 2
    assert estimate.upper_bound == pytest.approx(0.5, abs=1e-12)
    assert set(estimate.mismatches) == {"wrong"}
    assert estimate.mismatches["wrong"] == pytest.approx(0.1, abs=1e-9)


def test_energy_bound_without_a_match_fails(torus, torus_grid):
    target = ContactDynamicalSystem.generate(ConstantHamiltonian(torus, 0.5))
    wrong = ContactDynamicalSystem.generate(ConstantHamiltonian(torus, 0.6), name="wrong")
    with pytest.raises(CandidateError):
        energy_upper_bound(target, [wrong], torus_grid)
    with pytest.raises(CandidateError):
        energy_upper_bound(target, [], torus_grid)


# ==========================================
# Displacement
# ==========================================


def test_half_turn_displaces_the_sector(darboux):
    K = annular_sector(darboux)
    assert displacement_check(rotation_system(darboux).flow, K)
    assert not displacement_check(rotation_system(darboux, angle=0.2).flow, K)
    assert not displacement_check(identity_system(darboux).flow, K)


def test_envelope_counts_only_displacing_systems(darboux, darboux_grid):
    K = annular_sector(darboux)
    turn = rotation_system(darboux)
    report = energy_capacity_envelope([turn, identity_system(darboux)], K, darboux_grid)
    assert report.displacing == ["rotation"]
    expected = ham_norm(turn.hamiltonian, "L1inf", darboux_grid).value
    assert report.minimum == pytest.approx(expected, rel=1e-12)
    assert report.products["rotation"] == report.minimum
