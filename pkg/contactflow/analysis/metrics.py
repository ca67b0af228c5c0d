"""
Norms of Hamiltonians, distances between isotopies and energy estimates.

The slice norm is ||H_t|| = osc(H_t) + |c(H_t)| where osc is the spread of
the sampled values and c the mean against the contact volume. The
L(1,inf) norm integrates slice norms over the time knots with Simpson's rule
and the L^inf norm takes their maximum.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Callable, Optional, Sequence

import numpy as np
from scipy.integrate import simpson

from contactflow.analysis.grids import SpatialGrid, make_grid, time_knots
from contactflow.core.config import settings
from contactflow.core.errors import (
    CandidateError,
    ChartError,
    ChartMismatchError,
    ContactFlowError,
    EmptySampleError,
    GridCoverageError,
)
from contactflow.core.logging import get_logger
from contactflow.dynamics.flow import FlowMap
from contactflow.dynamics.hamfield import Hamiltonian, difference
from contactflow.dynamics.profiles import TWO_PI
from contactflow.schemas.report import EnergyEstimate, EnvelopeReport, MetricReport, NormKind, NormReport

if TYPE_CHECKING:
    from contactflow.dynamics.cds import ContactDynamicalSystem

logger = get_logger(__name__)

NORM_KINDS: tuple[str, ...] = ("osc_mean_t", "L1inf", "Linf")


# ==========================================
# Hamiltonian norms
# ==========================================


def _knots(interval: tuple[float, float], knots: Optional[Sequence[float]]) -> np.ndarray:
    if knots is None:
        return time_knots(interval, settings.TIME_KNOTS)
    knots = np.asarray(knots, dtype=float)
    if knots.size == 0:
        raise EmptySampleError("no time knots given")
    return knots


def oscillation(values: np.ndarray) -> float:
    return float(np.max(values) - np.min(values))


def volume_mean(values: np.ndarray, grid: SpatialGrid) -> float:
    """c(H_t): the contact-volume weighted mean on the grid."""
    return float(np.dot(grid.weights, values) / np.sum(grid.weights))


def slice_norm(H: Hamiltonian, t: float, grid: SpatialGrid) -> float:
    """||H_t|| = osc(H_t) + |c(H_t)|."""
    values = H.value(t, grid.points)
    return oscillation(values) + abs(volume_mean(values, grid))


def slice_norms(H: Hamiltonian, grid: SpatialGrid, knots: Sequence[float]) -> np.ndarray:
    return np.array([slice_norm(H, t, grid) for t in knots])


def check_coverage(H: Hamiltonian, grid: SpatialGrid, knots: Sequence[float]) -> None:
    """
    Raises:
        GridCoverageError: The support of H reaches beyond the grid box
    """
    if not H.chart.same_as(grid.chart):
        raise ChartMismatchError(f"{H.name} and the grid live on different charts")
    if H.support is not None:
        axes = list(range(0, grid.chart.dim - 1, 2)) + [grid.chart.dim - 1]
        lo_ok = np.all(H.support[axes, 0] >= grid.box[axes, 0] - 1e-12)
        hi_ok = np.all(H.support[axes, 1] <= grid.box[axes, 1] + 1e-12)
        if not (lo_ok and hi_ok):
            raise GridCoverageError(f"support of {H.name} {H.support.tolist()} leaves the grid box")
        return
    faces = grid.boundary_points()
    if len(faces) == 0:
        return
    probe = [knots[0], knots[len(knots) // 2], knots[-1]]
    for t in probe:
        edge = float(np.max(np.abs(H.value(t, faces))))
        if edge > settings.COVERAGE_TOLERANCE:
            raise GridCoverageError(f"{H.name} is {edge:.3e} on the grid boundary at t={t:.6g}")


def ham_norm(
    H: Hamiltonian,
    kind: NormKind,
    grid: SpatialGrid,
    t: Optional[float] = None,
    knots: Optional[Sequence[float]] = None,
    check: bool = True,
) -> NormReport:
    """
    Norm of a Hamiltonian on an evaluation grid.

    Args:
        H: The Hamiltonian
        kind: "osc_mean_t" for the slice norm at t (default: start of the interval),
            "L1inf" for the time integral of slice norms, "Linf" for their maximum
        grid: Spatial grid covering the support of H
        t: Slice time for "osc_mean_t"
        knots: Time knots for the integrated kinds (default: uniform, settings.TIME_KNOTS)
        check: Run the coverage check first

    Returns:
        NormReport: value with the grid specification and its hash
    """
    if kind not in NORM_KINDS:
        raise ValueError(f"unknown norm kind {kind!r}")
    if kind == "osc_mean_t":
        knots = np.array([H.interval[0] if t is None else float(t)])
    else:
        knots = _knots(H.interval, knots)
    if check:
        check_coverage(H, grid, knots)
    norms = slice_norms(H, grid, knots)
    if kind == "osc_mean_t":
        value = float(norms[0])
    elif kind == "Linf":
        value = float(np.max(norms))
    else:
        value = float(simpson(norms, x=knots)) if len(knots) > 2 else float(np.trapezoid(norms, knots))
        value = max(value, 0.0)
    spec = grid.spec_with(knots)
    return NormReport(kind=kind, value=value, grid=spec, grid_hash=spec.digest())


def lipschitz_in_time(H: Hamiltonian, grid: SpatialGrid, knots: Optional[Sequence[float]] = None) -> float:
    """max |H(t_{k+1}, x) - H(t_k, x)| / (t_{k+1} - t_k) over the grid."""
    knots = _knots(H.interval, knots)
    previous = H.value(knots[0], grid.points)
    worst = 0.0
    for t0, t1 in zip(knots[:-1], knots[1:]):
        current = H.value(t1, grid.points)
        worst = max(worst, float(np.max(np.abs(current - previous))) / (t1 - t0))
        previous = current
    return worst


# ==========================================
# Distances between isotopies
# ==========================================


def _require_same_chart(first: FlowMap, second: FlowMap) -> None:
    if not first.chart.same_as(second.chart):
        raise ChartMismatchError(f"{first.name} and {second.name} live on different charts")


def c0_distance(
    first: FlowMap, second: FlowMap, points: np.ndarray, times: Sequence[float], symmetric: bool = False
) -> float:
    """
    sup over points and times of the chart distance between the two isotopies.
    The symmetric variant is max_t [d(phi_t, psi_t) + d(phi_t^-1, psi_t^-1)],
    each term a sup over the points.
    """
    _require_same_chart(first, second)
    points = first.chart._rows(points)
    if len(points) == 0:
        raise EmptySampleError("c0 distance needs sample points")
    chart = first.chart
    left, _ = first.trajectory(points, times)
    right, _ = second.trajectory(points, times)
    forward = np.array([np.max(chart.point_distance(left[k], right[k])) for k in range(len(times))])
    if not symmetric:
        return float(np.max(forward))
    backward = np.array(
        [np.max(chart.point_distance(first.inverse(t, points), second.inverse(t, points))) for t in times]
    )
    return float(np.max(forward + backward))


def conformal_distance(first: FlowMap, second: FlowMap, points: np.ndarray, times: Sequence[float]) -> float:
    """|h - f|: sup over points and times of the difference of conformal factors."""
    _require_same_chart(first, second)
    _, h = first.trajectory(points, times)
    _, f = second.trajectory(points, times)
    return float(np.max(np.abs(h - f)))


def conformal_sup(flow: FlowMap, points: np.ndarray, times: Sequence[float]) -> float:
    """|h| = sup |h_t(x)|."""
    _, h = flow.trajectory(points, times)
    return float(np.max(np.abs(h)))


def contact_distance(
    A: "ContactDynamicalSystem",
    B: "ContactDynamicalSystem",
    kind: NormKind,
    grid: SpatialGrid,
    knots: Optional[Sequence[float]] = None,
    points: Optional[np.ndarray] = None,
) -> MetricReport:
    """
    d(A, B) = d-bar(Phi_A, Phi_B) + |h_A - h_B| + ||H_A - H_B||, all on one grid.
    """
    if not A.chart.same_as(B.chart):
        raise ChartMismatchError(f"{A.name} and {B.name} live on different charts")
    knots = _knots(A.interval, knots)
    points = grid.points if points is None else points
    c0 = c0_distance(A.flow, B.flow, points, knots, symmetric=True)
    conformal = conformal_distance(A.flow, B.flow, points, knots)
    norm = ham_norm(difference(A.hamiltonian, B.hamiltonian), kind, grid, knots=knots).value
    spec = grid.spec_with(knots)
    return MetricReport(
        c0_component=c0,
        conformal_component=conformal,
        hamiltonian_component=norm,
        total=c0 + conformal + norm,
        norm_kind=kind,
        grid=spec,
        grid_hash=spec.digest(),
    )


# ==========================================
# Energy
# ==========================================


def _target_map(target) -> Callable[[np.ndarray], np.ndarray]:
    return target.time_one if hasattr(target, "time_one") else target


def energy_upper_bound(
    target,
    candidates: Sequence["ContactDynamicalSystem"],
    grid: SpatialGrid,
    samples: Optional[np.ndarray] = None,
    kind: NormKind = "L1inf",
    knots: Optional[Sequence[float]] = None,
    tolerance: Optional[float] = None,
) -> EnergyEstimate:
    """
    Least norm among candidates whose time-one map matches the target.

    Args:
        target: A map points -> points, or a system whose time-one map is the target
        candidates: Systems generating (approximately) the target
        grid: Grid for the norms
        samples: Points on which time-one maps are compared (default: the grid points)
        kind: Norm kind, "L1inf" for E and "Linf" for its sup variant
        tolerance: Matching tolerance (default: settings.MATCH_TOLERANCE)

    Raises:
        CandidateError: No candidates, or none matches the target
    """
    if not candidates:
        raise CandidateError("energy estimate needs at least one candidate")
    tolerance = settings.MATCH_TOLERANCE if tolerance is None else tolerance
    samples = grid.points if samples is None else samples
    expected = _target_map(target)(samples)
    mismatches: dict[str, float] = {}
    best: Optional[tuple[float, int]] = None
    for index, candidate in enumerate(candidates):
        try:
            gap = float(np.max(candidate.chart.point_distance(candidate.time_one(samples), expected)))
        except ContactFlowError as e:
            logger.warning(f"Candidate {candidate.name} could not be evaluated: {e}")
            gap = float("inf")
        if gap > tolerance:
            mismatches[candidate.name] = gap
            continue
        value = ham_norm(candidate.hamiltonian, kind, grid, knots=knots).value
        if best is None or value < best[0]:
            best = (value, index)
    if best is None:
        raise CandidateError("no candidate matches the target map", mismatches)
    if mismatches:
        logger.warning(f"Rejected {len(mismatches)} candidate(s) not matching the target")
    value, index = best
    logger.info(f"Energy upper bound {value:.6g} witnessed by {candidates[index].name}")
    return EnergyEstimate(
        upper_bound=value,
        witness=candidates[index].name,
        witness_index=index,
        candidate_count=len(candidates),
        norm_kind=kind,
        mismatches=mismatches,
    )


# ==========================================
# Displacement
# ==========================================


def _periodic_axes(chart) -> list[int]:
    if chart.is_torus:
        return list(range(chart.dim))
    return list(range(1, chart.dim - 1, 2))


def displacement_check(
    flow: FlowMap,
    K: Sequence[Sequence[float]],
    counts: int | Sequence[int] = 16,
    t: Optional[float] = None,
) -> bool:
    """
    True iff phi_t maps every grid point of K outside K enlarged by one grid
    cell on each side (t defaults to the end of the interval).

    Raises:
        ChartError: K is degenerate or leaves the chart
    """
    chart = flow.chart
    K = np.asarray(K, dtype=float)
    if K.shape != (chart.dim, 2) or np.any(K[:, 1] <= K[:, 0]):
        raise ChartError(f"degenerate set K {K.tolist()}")
    grid = make_grid(chart, counts, K)
    t = flow.interval[1] if t is None else t
    images = chart.to_polar(flow(t, grid.points))
    lo, hi = K[:, 0] - grid.cells, K[:, 1] + grid.cells
    inside = np.ones(len(images), dtype=bool)
    periodic = _periodic_axes(chart)
    for axis in range(chart.dim):
        coord = images[:, axis]
        if axis in periodic:
            if hi[axis] - lo[axis] >= TWO_PI:
                continue
            hit = np.mod(coord - lo[axis], TWO_PI) <= hi[axis] - lo[axis]
            if not chart.is_torus and lo[axis - 1] <= 0.0:
                # near the axis every angle is within one radial cell of K
                hit |= images[:, axis - 1] <= grid.cells[axis - 1]
        else:
            hit = (coord >= lo[axis]) & (coord <= hi[axis])
        inside &= hit
    return not bool(np.any(inside))


def energy_capacity_envelope(
    systems: Sequence["ContactDynamicalSystem"],
    K: Sequence[Sequence[float]],
    grid: SpatialGrid,
    counts: int | Sequence[int] = 16,
    kind: NormKind = "L1inf",
    knots: Optional[Sequence[float]] = None,
) -> EnvelopeReport:
    """min of ||H|| e^{|h|} over the systems that displace K."""
    products: dict[str, float] = {}
    displacing: list[str] = []
    for system in systems:
        if not displacement_check(system.flow, K, counts):
            continue
        displacing.append(system.name)
        system_knots = _knots(system.interval, knots)
        norm = ham_norm(system.hamiltonian, kind, grid, knots=system_knots).value
        products[system.name] = norm * float(np.exp(conformal_sup(system.flow, grid.points, system_knots)))
    minimum = min(products.values()) if products else None
    logger.info(f"Energy-capacity envelope: {len(displacing)}/{len(systems)} displace K, minimum {minimum}")
    return EnvelopeReport(minimum=minimum, displacing=displacing, products=products)
