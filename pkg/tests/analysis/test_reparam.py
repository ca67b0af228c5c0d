import numpy as np
import pytest

from contactflow.analysis import reparam
from contactflow.analysis.metrics import slice_norm
from contactflow.core.errors import FlatteningError, RegularityError, ReparamError, TimeRangeError
from contactflow.dynamics.builtins import BumpHamiltonian, RotationHamiltonian, TimeProfileHamiltonian, zero_hamiltonian
from contactflow.dynamics.cds import ContactDynamicalSystem
from contactflow.dynamics.profiles import TimeProfile


@pytest.fixture
def growing_bump(darboux):
    return BumpHamiltonian(
        darboux, [0.2, 0.1, 0.0], 0.5, tilt=[0.3, -0.2, 0.5], profile=TimeProfile(offset=1.0, slope=1.0)
    )


# ==========================================
# Time changes
# ==========================================


def test_linear_time_change():
    zeta = reparam.linear(0.2, 0.6).check()
    assert float(zeta(0.4)) == pytest.approx(0.5)
    assert float(zeta.derivative(0.3)) == pytest.approx(2.5)
    with pytest.raises(ReparamError):
        reparam.linear(0.6, 0.2)


def test_scale_stops_short_of_the_end():
    zeta = reparam.scale(0.5).check()
    assert zeta.partial
    assert float(zeta(1.0)) == 0.5
    with pytest.raises(ReparamError):
        reparam.scale(1.5)


def test_flat_template_is_flat_at_both_ends():
    zeta = reparam.flat(0.1).check()
    t = np.array([0.0, 0.05, 0.1, 0.9, 0.95, 1.0])
    np.testing.assert_allclose(zeta.derivative(t), 0.0, atol=1e-12)
    np.testing.assert_allclose(zeta([0.0, 1.0]), [0.0, 1.0], atol=1e-9)
    assert float(zeta.derivative(0.5)) == pytest.approx(1.0 / 0.7)
    with pytest.raises(ReparamError):
        reparam.flat(0.3)


def test_round_trip_is_a_loop():
    zeta = reparam.round_trip().check()
    assert zeta.is_loop
    assert float(zeta(0.5)) == pytest.approx(1.0)
    assert not reparam.identity().is_loop


def test_check_rejects_time_changes_leaving_the_target():
    zeta = reparam.ReparamFn(interval=(0.0, 1.0), value=lambda t: 2.0 * np.asarray(t), derivative=lambda t: 2.0)
    with pytest.raises(ReparamError):
        zeta.check()


# ==========================================
# Reparameterized Hamiltonians
# ==========================================


def test_rescaled_hamiltonian_runs_twice_as_fast(darboux, darboux_points):
    H = RotationHamiltonian(darboux, profile=TimeProfile(offset=1.0, slope=1.0))
    fast = reparam.rescale_interval(H, 0.0, 0.5)
    assert fast.interval == (0.0, 0.5)
    np.testing.assert_allclose(fast.value(0.2, darboux_points), 2.0 * H.value(0.4, darboux_points))


def test_rescaled_system_reaches_the_same_end(darboux, darboux_points):
    A = ContactDynamicalSystem.generate(RotationHamiltonian(darboux, omega=1.3))
    fast = reparam.rescale_system(A, 0.0, 0.5)
    np.testing.assert_allclose(fast.flow(0.5, darboux_points), A.time_one(darboux_points), atol=1e-14)


def test_reparameterization_needs_the_matching_interval(bump):
    with pytest.raises(TimeRangeError):
        reparam.reparameterize(bump, reparam.linear(0.0, 1.0, target=(0.0, 2.0)))


def test_zeta_estimates_hold(growing_bump, darboux_grid):
    estimate = reparam.zeta_estimate(growing_bump, reparam.flat(0.1), reparam.identity(), 0.15, darboux_grid)
    assert estimate.osc_measured <= estimate.osc_bound + 1e-9
    assert estimate.mean_measured <= estimate.mean_bound + 1e-9
    assert estimate.integrated_measured <= estimate.integrated_bound + 1e-9


# ==========================================
# Flattening
# ==========================================


def test_flattening_keeps_flat_input(bump, darboux_grid):
    already = reparam.reparameterize(bump, reparam.flat(0.1))
    result = reparam.boundary_flatten(already, 0.1, darboux_grid)
    assert result.delta == 0.0
    assert result.l1inf_after == result.l1inf_before


def test_flattening_meets_the_requested_epsilon(growing_bump, darboux_grid):
    result = reparam.boundary_flatten(growing_bump, 0.5, darboux_grid)
    assert 0.0 < result.delta <= 0.2
    assert result.certified_bound < 0.5
    assert result.hamiltonian.flat_margin == pytest.approx(result.delta)
    np.testing.assert_allclose(result.hamiltonian.value(0.0, darboux_grid.points), 0.0, atol=1e-12)


def test_flattening_keeps_the_end_map(darboux, darboux_grid, darboux_points):
    A = ContactDynamicalSystem.generate(RotationHamiltonian(darboux, omega=0.8))
    flattened, result = reparam.flatten_system(A, 0.5, darboux_grid)
    assert result.delta > 0.0
    np.testing.assert_allclose(flattened.time_one(darboux_points), A.time_one(darboux_points), atol=1e-9)


def test_flattening_fails_below_the_template_floor(growing_bump, darboux_grid):
    with pytest.raises(FlatteningError):
        reparam.boundary_flatten(growing_bump, 1e-12, darboux_grid)


# ==========================================
# Constant speed and concatenation
# ==========================================


def test_constant_speed_inverts_the_accumulated_norm(growing_bump, darboux_grid):
    H, zeta = reparam.constant_speed(growing_bump, darboux_grid)
    s = np.linspace(0.0, 1.0, 11)
    # ||G_t|| = (1 + t) ||G_0||, so eta(t) = (t + t^2 / 2) / (3 / 2)
    np.testing.assert_allclose(zeta(s), np.sqrt(1.0 + 3.0 * s) - 1.0, atol=1e-5)
    assert reparam.speed_ratio(H, darboux_grid) <= 1.01
    expected = 1.5 * slice_norm(growing_bump, 0.0, darboux_grid)
    assert slice_norm(H, 0.4, darboux_grid) == pytest.approx(expected, rel=1e-3)


def test_constant_speed_needs_a_moving_isotopy(darboux, darboux_grid):
    with pytest.raises(RegularityError):
        reparam.constant_speed(zero_hamiltonian(darboux), darboux_grid)


def test_concatenation_composes_the_end_maps(darboux, darboux_points):
    A = ContactDynamicalSystem.generate(RotationHamiltonian(darboux, omega=1.0))
    B = ContactDynamicalSystem.generate(RotationHamiltonian(darboux, omega=0.5))
    joined = reparam.concatenate([reparam.rescale_system(A, 0.0, 0.5), reparam.rescale_system(B, 0.5, 1.0)])
    both = ContactDynamicalSystem.generate(RotationHamiltonian(darboux, omega=1.5))
    np.testing.assert_allclose(joined.time_one(darboux_points), both.time_one(darboux_points), atol=1e-12)
    expected = 2.0 * B.hamiltonian.value(0.5, darboux_points)
    np.testing.assert_allclose(joined.hamiltonian.value(0.75, darboux_points), expected)
    with pytest.raises(ReparamError):
        reparam.concatenate([])


def test_windowed_constant_speed_absorbs_an_isolated_stop(darboux, darboux_grid):
    # ||G_t|| = |t - 1/2| vanishes once
    G = TimeProfileHamiltonian(darboux, TimeProfile(offset=-0.5, slope=1.0))
    with pytest.raises(RegularityError):
        reparam.constant_speed(G, darboux_grid)
    H, zeta = reparam.constant_speed_windowed(G, [0.5], 0.5, darboux_grid)
    np.testing.assert_allclose(zeta([0.0, 1.0]), [0.0, 1.0], atol=1e-12)
    assert np.all(np.diff(zeta(np.linspace(0.0, 1.0, 101))) >= -1e-12)
    assert zeta.parameters["delta"] == pytest.approx(0.125)
    speed = zeta.parameters["speed"]
    assert speed < 0.25 + 0.5 / 3.0
    for s in (0.05, 0.95):
        assert slice_norm(H, s, darboux_grid) == pytest.approx(speed, rel=1e-2)


def test_windowed_constant_speed_without_stops_is_constant_speed(growing_bump, darboux_grid):
    _, plain = reparam.constant_speed(growing_bump, darboux_grid)
    _, windowed = reparam.constant_speed_windowed(growing_bump, [], 0.5, darboux_grid)
    s = np.linspace(0.0, 1.0, 11)
    np.testing.assert_allclose(windowed(s), plain(s))


def test_windowed_constant_speed_needs_motion_between_stops(darboux, darboux_grid):
    with pytest.raises(ReparamError):
        reparam.constant_speed_windowed(zero_hamiltonian(darboux), [0.5], 0.5, darboux_grid)
