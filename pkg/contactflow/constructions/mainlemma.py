"""
Synthesis of a system with a prescribed time-one map and controlled sup norm.

Given identity-based systems H_1, H_2, ... on [0, 1] whose time-one maps
phi_1, phi_2, ... converge, the pipeline assembles one Hamiltonian F:

    head     the first system, boundary flattened (near_input) or passed
             through the technical lemma and flattened (near_identity),
             compressed onto [0, t_{i0}];
    stage i  K_i = push_forward(H_{i-1}^{-1} H_i, phi_{i-1}) runs from phi_{i-1}
             to phi_i. The technical lemma gives L_i with the same endpoints and
             ||L_i||_inf close to ||K_i||_(1,inf); flattening gives M_i and
             compression onto [t_{i-1}, t_i] gives N_i;
    tail     the constant isotopy at phi_I on [t_I, 1].

Every stage measures its bounds against eps_i and records them in a
PipelineTrace; the flows are never integrated twice, pieces reuse the
flows of the inputs.
"""

from __future__ import annotations

from typing import NamedTuple, Optional, Sequence

import numpy as np

from contactflow.analysis import metrics
from contactflow.analysis.grids import SpatialGrid, inner_box, sample_points, segment_knots
from contactflow.analysis.regularize import (
    LoopVariation,
    build_variation,
    regularize_basic,
    regularize_isotopy,
)
from contactflow.analysis.reparam import (
    FlatteningResult,
    ReparamFn,
    concatenate,
    constant_speed,
    constant_speed_windowed,
    flatten_system,
    reparameterize_system,
    rescale_system,
)
from contactflow.core.config import settings
from contactflow.core.errors import PipelineError, RegularityError, StageBoundError, ThinningError
from contactflow.core.logging import get_logger
from contactflow.dynamics.builtins import BumpHamiltonian, ZonalHamiltonian, zero_hamiltonian
from contactflow.dynamics.cds import (
    Automorphism,
    ContactDynamicalSystem,
    Provenance,
    cross_check,
    group_difference,
    push_forward,
)
from contactflow.dynamics.charts import ContactChart
from contactflow.dynamics.flow import FlowMap, PointMap, StationaryFlow
from contactflow.dynamics.hamfield import Hamiltonian, LinearCombination, difference
from contactflow.schemas.pipeline import PipelineMode, PipelineTrace, Schedule

logger = get_logger(__name__)

MODES = ("near_input", "near_identity")
SAMPLE_POINTS = 64


# ==========================================
# Helpers
# ==========================================


def _knots(H: Hamiltonian, extra: Sequence[float] = ()) -> np.ndarray:
    return segment_knots(H.interval, list(H.breakpoints) + list(extra))


def _norm(H: Hamiltonian, kind: str, grid: SpatialGrid, extra: Sequence[float] = ()) -> float:
    return metrics.ham_norm(H, kind, grid, knots=_knots(H, extra)).value


def constant_isotopy(
    chart: ContactChart, interval: tuple[float, float], point_map: Optional[PointMap] = None, name: str = "const"
) -> ContactDynamicalSystem:
    """The isotopy t -> psi with the zero Hamiltonian."""
    H = zero_hamiltonian(chart, interval)
    return ContactDynamicalSystem(H, StationaryFlow(chart, interval, point_map, H, name), Provenance.ALGEBRAIC, name)


def default_loop_center(chart: ContactChart) -> tuple[np.ndarray, float]:
    """Base point half way out in the first plane at mid height, with a cutoff radius that stays inside the box."""
    box = np.asarray(chart.box, dtype=float)
    if chart.is_torus:
        return box.mean(axis=1), 0.5
    radii = box[0:-1:2, 1]
    coords = np.zeros(chart.dim)
    coords[0] = 0.5 * radii[0]
    coords[-1] = box[-1].mean()
    radius = 0.25 * min(float(np.min(radii)), 0.5 * float(box[-1, 1] - box[-1, 0]))
    return chart.from_polar(coords[None, :])[0], radius


def _base_drift(flow: FlowMap, base: Optional[PointMap], points: np.ndarray, knots: np.ndarray) -> tuple[float, float]:
    """d-bar(Phi, constant isotopy at base) and sup |h_t - h_start|."""
    reference = StationaryFlow(flow.chart, flow.interval, base)
    c0 = metrics.c0_distance(flow, reference, points, knots, symmetric=True)
    _, h = flow.trajectory(points, knots)
    return c0, float(np.max(np.abs(h - h[0])))


def _end_gap(first: FlowMap, second: FlowMap, points: np.ndarray) -> float:
    left = first(first.interval[1], points)
    right = second(second.interval[1], points)
    return float(np.max(first.chart.point_distance(left, right)))


def estimate_modulus(system: ContactDynamicalSystem, epsilon: float, points: np.ndarray, seed: int = 0) -> float:
    """
    Largest delta = epsilon 2^-m for which sampled pairs at distance delta have
    time-one images and conformal factors within epsilon of each other.
    An estimate of the uniform-continuity modulus of the limit map.
    """
    chart = system.chart
    rng = np.random.default_rng(seed)
    directions = rng.normal(size=points.shape)
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    end = system.interval[1]
    images, h = system.flow.evaluate(end, points)
    delta = float(epsilon)
    for _ in range(40):
        shifted = points + delta * directions
        keep = chart.contains(shifted, margin=-settings.DOMAIN_MARGIN)
        if np.any(keep):
            moved, g = system.flow.evaluate(end, shifted[keep])
            spread = float(np.max(chart.point_distance(moved, images[keep])))
            conformal = float(np.max(np.abs(g - h[keep])))
            if spread < epsilon and conformal < epsilon:
                return delta
        delta *= 0.5
    return delta


# ==========================================
# Inputs
# ==========================================


def perturbation_sequence(
    system: ContactDynamicalSystem,
    schedule: Schedule,
    count: int,
    scale: float = 0.01,
    step: Optional[float] = None,
) -> list[ContactDynamicalSystem]:
    """
    A synthetic convergent sequence: system perturbed by amplitudes
    scale * eps_1^2 * 4^-m, m = 0 .. count - 1, far below the stage gates.
    With scale = 0 the sequence is constant.

    Zonal inputs are perturbed through their mean (still basic with closed-form
    flows); other T^3 inputs get a zonal term, Darboux inputs a bump.
    """
    if count < 1:
        raise PipelineError("a perturbation sequence needs at least one system")
    if scale == 0.0:
        return [system] * count
    H = system.hamiltonian
    chart = H.chart
    out = []
    for m in range(count):
        amplitude = scale * schedule.epsilon(1) ** 2 * 0.25**m
        name = f"{system.name}+{amplitude:.1e}"
        if isinstance(H, ZonalHamiltonian):
            perturbed: Hamiltonian = ZonalHamiltonian(
                chart, H.g0 + amplitude, H.cos_coeffs, H.sin_coeffs, H.profile, H.interval, name
            )
        elif chart.is_torus:
            term = ZonalHamiltonian(chart, 0.0, (1.0,), interval=H.interval, name="cos z")
            perturbed = LinearCombination([(1.0, H), (amplitude, term)], name=name)
        else:
            center, radius = default_loop_center(chart)
            term = BumpHamiltonian(chart, center, radius, interval=H.interval, name="bump")
            perturbed = LinearCombination([(1.0, H), (amplitude, term)], name=name)
        out.append(ContactDynamicalSystem.generate(perturbed, step, name))
    return out


def _validated(systems: Sequence[ContactDynamicalSystem], strict: bool) -> list[ContactDynamicalSystem]:
    systems = list(systems)
    if not systems:
        raise PipelineError("no input systems")
    first = systems[0]
    for system in systems:
        if not system.chart.same_as(first.chart) or system.interval != (0.0, 1.0):
            raise PipelineError(f"{system.name}: inputs must share the chart and live on [0, 1]")
        if not system.flow.is_identity_based:
            raise PipelineError(f"{system.name} is not based at the identity")
        if strict and not system.hamiltonian.is_basic:
            raise PipelineError(f"{system.name} is not basic; strict mode needs basic inputs")
    return systems


# ==========================================
# Technical lemma
# ==========================================


class TechnicalLemmaResult(NamedTuple):
    system: ContactDynamicalSystem
    zeta: ReparamFn
    loop_norm: float
    margin: float
    exceptional_times: tuple[float, ...]


def technical_lemma(
    system: ContactDynamicalSystem,
    epsilon: float,
    grid: SpatialGrid,
    strict: bool = False,
    variation: Optional[LoopVariation] = None,
    point: Optional[Sequence[float]] = None,
) -> TechnicalLemmaResult:
    """
    An identity-based system with the same time-one map whose slice norms are
    constant, up to epsilon.

    Non-strict: a small loop F (||F||_(1,inf) <= epsilon / 2) makes Phi_F^{-1} o Phi_H
    regular and the constant-speed reparameterization spreads ||.|| evenly.
    Strict: a basic loop f(t) is subtracted instead; when the difference still
    stalls, the windowed variant absorbs the finitely many stalls.

    Raises:
        RegularizationError: No loop makes the isotopy regular
        RegularityError: The regularized isotopy still stalls at a sampled time
    """
    H = system.hamiltonian
    chart = H.chart
    if strict:
        p = np.asarray(point, dtype=float) if point is not None else default_loop_center(chart)[0]
        basic = regularize_basic(H, p, amplitude=epsilon / 4.0)
        loop = ContactDynamicalSystem.generate(basic.hamiltonian)
        regular = group_difference(loop, system)
        try:
            _, zeta = constant_speed(regular.hamiltonian, grid)
            exceptional: tuple[float, ...] = ()
        except RegularityError as e:
            logger.warning(f"Technical lemma on {system.name}: {e}; windowing around {len(basic.zeros)} zero(s)")
            _, zeta = constant_speed_windowed(regular.hamiltonian, basic.zeros, epsilon, grid)
            exceptional = tuple(basic.zeros)
        loop_norm = metrics.ham_norm(basic.hamiltonian, "L1inf", grid).value
        margin = 0.0
    else:
        if variation is None:
            center, radius = default_loop_center(chart)
            variation = build_variation(chart, center, chart.n, radius)
        found = regularize_isotopy(H, variation, epsilon / (4.0 * variation.radius), grid, smallness=epsilon / 2.0)
        regular = found.difference_system
        _, zeta = constant_speed(regular.hamiltonian, grid)
        loop_norm, margin, exceptional = found.loop_norm, found.fine_margin, ()
    shaped = reparameterize_system(regular, zeta)
    logger.info(f"Technical lemma on {system.name}: loop norm {loop_norm:.3e}, {len(exceptional)} window(s)")
    return TechnicalLemmaResult(shaped, zeta, loop_norm, margin, exceptional)


class ShortenResult(NamedTuple):
    K: ContactDynamicalSystem
    L: ContactDynamicalSystem
    M: ContactDynamicalSystem
    lemma: Optional[TechnicalLemmaResult]
    flattening: Optional[FlatteningResult]


def shorten_and_flatten(
    transition: ContactDynamicalSystem,
    epsilon: float,
    grid: SpatialGrid,
    base: Optional[PointMap] = None,
    strict: bool = False,
) -> ShortenResult:
    """
    K -> L -> M for one stage.

    `transition` is the identity-based system H_{i-1}^{-1} H_i and `base` the
    map phi_{i-1}; K is the transition pushed forward by the base. The
    technical lemma runs on the identity-based transition and is pushed
    forward afterwards. A vanishing K gives the constant isotopy at the base.
    """
    chart, interval = transition.chart, transition.interval
    K = transition if base is None else push_forward(transition, base)
    if _norm(K.hamiltonian, "L1inf", grid) <= settings.ZERO_NORM_TOLERANCE:
        constant = constant_isotopy(chart, interval, base)
        return ShortenResult(K, constant, constant, None, None)
    lemma = technical_lemma(transition, epsilon, grid, strict)
    L = lemma.system if base is None else push_forward(lemma.system, base)
    M, flattening = flatten_system(L, epsilon, grid)
    return ShortenResult(K, L, M, lemma, flattening)


# ==========================================
# Transitions and thinning
# ==========================================


def transition_systems(
    systems: Sequence[ContactDynamicalSystem],
    schedule: Schedule,
    grid: SpatialGrid,
    first_stage: int = 1,
    trace: Optional[PipelineTrace] = None,
    points: Optional[np.ndarray] = None,
    seed: int = 0,
    check_flows: bool = False,
) -> tuple[list[ContactDynamicalSystem], list[ContactDynamicalSystem]]:
    """
    Thin the input to a subsequence meeting the gates and build the K systems.

    The first system is kept. For stage i = first_stage + 1, ..., depth the
    next candidate Q after the last kept P is accepted when
        3 e^{|h_P^1 - h_P|} ||H_Q - H_P||_(1,inf) < eps_i,
        d-bar(Phi_Q, Phi_P) < delta_i,  ||K_i||_(1,inf) < eps_i,
    delta_i being estimated from the last input system. Rejected candidates
    are dropped with a warning.

    Returns:
        (kept systems, K systems based at the kept time-one maps)

    Raises:
        ThinningError: The input runs out before every stage has a transition
    """
    systems = list(systems)
    chart = systems[0].chart
    points = sample_points(chart, SAMPLE_POINTS, seed, inner_box(chart)) if points is None else points
    finest = systems[-1]
    kept, transitions = [systems[0]], []
    cursor = 1
    for stage in range(first_stage + 1, schedule.depth + 1):
        eps = schedule.epsilon(stage)
        delta = estimate_modulus(finest, eps, points, seed)
        if trace is not None:
            trace.delta_estimates[stage] = delta
            trace.info(stage, "delta_estimate", delta, estimated=True, note="modulus of the last input")
        logger.warning(f"Stage {stage}: delta_{stage} = {delta:.3e} estimated from {finest.name}")
        while True:
            if cursor >= len(systems):
                logger.error(f"Thinning exhausted {len(systems)} systems at stage {stage}")
                raise ThinningError(f"no system meets the gates of stage {stage} (eps={eps:.3e})")
            P, Q = kept[-1], systems[cursor]
            cursor += 1
            knots = _knots(P.hamiltonian)
            _, h = P.flow.trajectory(points, knots)
            weight = float(np.exp(np.max(np.abs(h[-1] - h))))
            gate = 3.0 * weight * _norm(difference(Q.hamiltonian, P.hamiltonian), "L1inf", grid)
            c0 = metrics.c0_distance(Q.flow, P.flow, points, knots, symmetric=True)
            transition = group_difference(P, Q)
            K = push_forward(transition, Automorphism.time_map(P, P.interval[1]))
            k_norm = _norm(K.hamiltonian, "L1inf", grid)
            if gate < eps and c0 < delta and k_norm < eps:
                break
            logger.warning(f"Stage {stage}: dropping {Q.name} (gate {gate:.3e}, d {c0:.3e}, K {k_norm:.3e})")
            if trace is not None:
                trace.dropped.append(Q.name)
        kept.append(Q)
        transitions.append(K)
        if trace is not None:
            trace.check(stage, "transition_gate", gate, eps)
            trace.check(stage, "transition_c0", c0, delta, estimated=True)
            trace.check(stage, "K_norm_L1inf", k_norm, eps)
            trace.check(stage, "K_end_gap", _end_gap(K.flow, Q.flow, points), settings.CROSS_CHECK_TOLERANCE, "<=")
            if check_flows:
                residual = cross_check(transition, points, knots)
                trace.check(stage, "transition_cross_check", residual, settings.CROSS_CHECK_TOLERANCE, "<=")
    if trace is not None:
        trace.kept = [s.name for s in kept]
    return kept, transitions


def transition_hamiltonians(
    systems: Sequence[ContactDynamicalSystem], schedule: Schedule, grid: SpatialGrid, **kwargs
) -> list[Hamiltonian]:
    """K_2, ..., K_depth after thinning; see `transition_systems`."""
    _, transitions = transition_systems(_validated(systems, False), schedule, grid, **kwargs)
    return [K.hamiltonian for K in transitions]


# ==========================================
# Head stage
# ==========================================


def predict_head(
    H: Hamiltonian, schedule: Schedule, mode: PipelineMode, epsilon: float, grid: SpatialGrid
) -> tuple[int, float]:
    """
    Smallest i0 whose predicted mode inequality holds, with the predicted left side.

    near_input:     eps/3 + (3 L + 2 ||H||_inf) 2^-i0 + sum_{i > i0} 3 eps_i < eps
    near_identity:  max((||H||_(1,inf) + 2 eps/3) / t_i0, 2^-i0) < ||H||_(1,inf) + eps

    Raises:
        StageBoundError: No index up to the schedule depth qualifies
    """
    knots = _knots(H)
    l1 = metrics.ham_norm(H, "L1inf", grid, knots=knots).value
    best = np.inf
    for i0 in range(1, schedule.depth + 1):
        if mode == "near_input":
            sup = metrics.ham_norm(H, "Linf", grid, knots=knots).value
            lipschitz = metrics.lipschitz_in_time(H, grid, knots)
            later = sum(3.0 * schedule.epsilon(i) for i in range(i0 + 1, schedule.depth + 1))
            predicted, required = epsilon / 3.0 + (3.0 * lipschitz + 2.0 * sup) * 0.5**i0 + later, epsilon
        else:
            predicted = max((l1 + 2.0 * epsilon / 3.0) / schedule.knot(i0), 0.5**i0)
            required = l1 + epsilon
        best = min(best, predicted)
        if predicted < required:
            return i0, predicted
    logger.error(f"No head index up to depth {schedule.depth} meets the {mode} bound (best {best:.3e})")
    raise StageBoundError(schedule.depth, f"{mode} head prediction", float(best), float(epsilon))


def _head(
    system: ContactDynamicalSystem, mode: PipelineMode, epsilon: float, grid: SpatialGrid, strict: bool
) -> ContactDynamicalSystem:
    budget = epsilon / 3.0
    if mode == "near_identity":
        system = technical_lemma(system, budget, grid, strict).system
    flattened, _ = flatten_system(system, budget, grid)
    return flattened


# ==========================================
# Synthesis
# ==========================================


def _truncation(
    pieces: Sequence[ContactDynamicalSystem], name: str
) -> ContactDynamicalSystem:
    """Pieces followed by the constant isotopy at their end map on [t_last, 1]."""
    last = pieces[-1]
    tail = constant_isotopy(last.chart, (last.interval[1], 1.0), last.flow.end_map(), "tail")
    return concatenate(list(pieces) + [tail], name=name, chained=True)


def synthesize(
    systems: ContactDynamicalSystem | Sequence[ContactDynamicalSystem],
    schedule: Schedule,
    grid: SpatialGrid,
    mode: PipelineMode = "near_identity",
    epsilon: float = 0.5,
    strict: bool = False,
    head_index: Optional[int] = None,
    reference: Optional[ContactDynamicalSystem] = None,
    seed: int = 0,
    raise_on_failure: bool = True,
    check_flows: bool = False,
) -> tuple[ContactDynamicalSystem, PipelineTrace]:
    """
    Assemble F with the time-one map of the input sequence's limit.

    Args:
        systems: A convergent sequence, or one system (used as a constant sequence)
        schedule: eps_i, t_i and the depth I
        grid: Evaluation grid for every norm
        mode: "near_input" asserts ||F - H||_(1,inf) < epsilon,
            "near_identity" asserts ||F||_inf < ||H||_(1,inf) + epsilon
        epsilon: Mode tolerance
        strict: Basic inputs; loops are basic and every conformal factor must vanish
        head_index: Override the predicted i0
        reference: The system H of the mode inequality (default: first kept system)
        raise_on_failure: Raise on the first failed record instead of only recording it

    Returns:
        (F on [0, 1], trace of every measured bound)

    Raises:
        PipelineError: Unknown mode or invalid inputs
        ThinningError: Input sequence too short for the gates
        StageBoundError: A measured bound fails (the trace is attached as `.trace`)
    """
    if mode not in MODES:
        raise PipelineError(f"unknown mode {mode!r}")
    if isinstance(systems, ContactDynamicalSystem):
        systems = perturbation_sequence(systems, schedule, schedule.depth + 1, scale=0.0)
    systems = _validated(systems, strict)
    chart = systems[0].chart
    points = sample_points(chart, SAMPLE_POINTS, seed, inner_box(chart))
    trace = PipelineTrace(mode=mode, strict=strict, epsilon=epsilon, depth=schedule.depth, grid_hash=grid.spec.digest())
    tolerance = settings.CROSS_CHECK_TOLERANCE

    H = (reference or systems[0]).hamiltonian
    if head_index is None:
        i0, predicted = predict_head(systems[0].hamiltonian, schedule, mode, epsilon, grid)
        trace.info(i0, "head_prediction", predicted)
    else:
        i0 = int(head_index)
        if not 1 <= i0 <= schedule.depth:
            raise PipelineError(f"head index {i0} outside [1, {schedule.depth}]")
    trace.head_index = i0
    logger.info(f"Synthesis ({mode}{', strict' if strict else ''}): head at stage {i0}, depth {schedule.depth}")

    kept, transitions = transition_systems(
        systems, schedule, grid, first_stage=i0, trace=trace, points=points, seed=seed, check_flows=check_flows
    )

    head = rescale_system(_head(kept[0], mode, epsilon, grid, strict), 0.0, schedule.knot(i0))
    head_sup = _norm(head.hamiltonian, "Linf", grid)
    trace.info(i0, "head_Linf", head_sup)
    trace.check(i0, "head_end_gap", _end_gap(head.flow, kept[0].flow, points), tolerance, "<=")

    pieces = [head]
    truncations = [(i0, _truncation(pieces, f"F_{i0}"))]
    for stage, (P, Q, K) in enumerate(zip(kept[:-1], kept[1:], transitions), start=i0 + 1):
        eps = schedule.epsilon(stage)
        base = Automorphism.time_map(P, P.interval[1])
        result = shorten_and_flatten(group_difference(P, Q), eps, grid, base, strict)
        knots = _knots(K.hamiltonian)
        k_norm = _norm(K.hamiltonian, "L1inf", grid)
        k_c0, k_drift = _base_drift(K.flow, base, points, knots)
        trace.check(stage, "K_c0_to_base", k_c0, 4.0 * eps, "<=")
        trace.check(stage, "K_conformal_drift", k_drift, 6.0 * eps)

        l_sup = _norm(result.L.hamiltonian, "Linf", grid)
        l_c0, l_drift = _base_drift(result.L.flow, base, points, _knots(result.L.hamiltonian))
        trace.check(stage, "L_Linf_vs_K", l_sup, k_norm + eps)
        trace.check(stage, "L_Linf", l_sup, 2.0 * eps)
        trace.check(stage, "L_c0_to_base", l_c0, 5.0 * eps, "<=")
        trace.check(stage, "L_conformal_drift", l_drift, 7.0 * eps)
        trace.check(stage, "L_end_gap", _end_gap(result.L.flow, Q.flow, points), tolerance, "<=")

        m_sup = _norm(result.M.hamiltonian, "Linf", grid)
        trace.check(stage, "M_Linf", m_sup, 3.0 * eps)
        trace.check(stage, "M_end_gap", _end_gap(result.M.flow, Q.flow, points), 2.0 * tolerance, "<=")

        N = rescale_system(result.M, schedule.knot(stage - 1), schedule.knot(stage))
        n_sup = _norm(N.hamiltonian, "Linf", grid)
        trace.check(stage, "N_Linf", n_sup, 0.5 ** (stage - 1), "<=")
        if strict:
            worst = max(metrics.conformal_sup(S.flow, points, knots) for S in (K, result.L, result.M))
            trace.check(stage, "conformal_sup", worst, tolerance, "<=")
        pieces.append(N)
        truncations.append((stage, _truncation(pieces, f"F_{stage}")))
        logger.info(f"Stage {stage}: ||K||={k_norm:.3e}, ||L||inf={l_sup:.3e}, ||M||inf={m_sup:.3e}, ||N||inf={n_sup:.3e}")

    _cauchy_checks(truncations, schedule, points, trace)
    F = truncations[-1][1]
    _final_checks(F, H, kept[-1], schedule, mode, epsilon, grid, points, trace, strict, reference)

    failures = trace.failures()
    if failures:
        first = failures[0]
        logger.error(f"{len(failures)} pipeline bound(s) failed; first: stage {first.stage} {first.quantity}")
        if raise_on_failure:
            error = StageBoundError(first.stage, first.quantity, first.measured, first.required or 0.0)
            error.trace = trace
            raise error
    return F, trace


def _cauchy_checks(
    truncations: Sequence[tuple[int, ContactDynamicalSystem]],
    schedule: Schedule,
    points: np.ndarray,
    trace: PipelineTrace,
) -> None:
    """d-bar(Phi_{F_i}, Phi_{F_j}) <= sum 7 eps_m and |f_i - f_j| < sum 9 eps_m over i < m <= j."""
    for (i, Fi), (j, Fj) in ((a, b) for n, a in enumerate(truncations) for b in truncations[n + 1 :]):
        knots = _knots(Fj.hamiltonian)
        c0 = metrics.c0_distance(Fi.flow, Fj.flow, points, knots, symmetric=True)
        conformal = metrics.conformal_distance(Fi.flow, Fj.flow, points, knots)
        trace.check(j, f"cauchy_c0_{i}_{j}", c0, sum(7.0 * schedule.epsilon(m) for m in range(i + 1, j + 1)), "<=")
        trace.check(j, f"cauchy_conformal_{i}_{j}", conformal, sum(9.0 * schedule.epsilon(m) for m in range(i + 1, j + 1)))


def _final_checks(
    F: ContactDynamicalSystem,
    H: Hamiltonian,
    last: ContactDynamicalSystem,
    schedule: Schedule,
    mode: PipelineMode,
    epsilon: float,
    grid: SpatialGrid,
    points: np.ndarray,
    trace: PipelineTrace,
    strict: bool,
    reference: Optional[ContactDynamicalSystem],
) -> None:
    depth = schedule.depth
    edges = [schedule.knot(i) for i in range(1, depth + 1)]
    knots = _knots(F.hamiltonian, edges)
    trace.check(depth, "time_one_gap", _end_gap(F.flow, last.flow, points), 3.0 * settings.INTEGRATOR_TOLERANCE, "<=")
    if reference is not None:
        trace.info(depth, "time_one_gap_to_reference", _end_gap(F.flow, reference.flow, points))

    f_sup = metrics.ham_norm(F.hamiltonian, "Linf", grid, knots=knots).value
    f_l1 = metrics.ham_norm(F.hamiltonian, "L1inf", grid, knots=knots).value
    trace.check(depth, "F_L1inf_le_Linf", f_l1, f_sup + settings.CROSS_CHECK_TOLERANCE, "<=")
    if mode == "near_identity":
        h_l1 = _norm(H, "L1inf", grid)
        trace.check(depth, "F_Linf", f_sup, h_l1 + epsilon, note=f"slack {h_l1 + epsilon - f_sup:.3e}")
    else:
        gap = metrics.ham_norm(difference(F.hamiltonian, H), "L1inf", grid, knots=knots).value
        trace.check(depth, "F_minus_H_L1inf", gap, epsilon, note=f"slack {epsilon - gap:.3e}")

    h = 1e-6
    for stage, t in enumerate(edges, start=1):
        if stage < trace.head_index:
            continue
        jump = float(np.max(np.abs(F.hamiltonian.value(t - h, grid.points) - F.hamiltonian.value(t + h, grid.points))))
        trace.check(stage, "knot_continuity", jump, settings.CROSS_CHECK_TOLERANCE, "<=")
    if strict:
        trace.check(depth, "F_conformal_sup", metrics.conformal_sup(F.flow, points, knots), settings.CROSS_CHECK_TOLERANCE, "<=")
