"""
Experiment suites.

Every suite turns one experiment of a config into result rows: each measured
quantity beside the bound it is held to, tagged with the module.operation that
produced it, the grid hash and the seed.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np
from pydantic import ValidationError

from contactflow.analysis import metrics
from contactflow.analysis.grids import SpatialGrid, inner_box, make_grid, sample_points, time_knots
from contactflow.analysis.regularize import (
    basic_obstruction_minors,
    build_variation,
    regularize_basic,
    regularize_isotopy,
)
from contactflow.analysis.reparam import constant_speed, speed_ratio
from contactflow.constructions import nonsmooth
from contactflow.constructions.mainlemma import default_loop_center, perturbation_sequence, synthesize
from contactflow.core.config import settings
from contactflow.core.errors import ConfigError, ContactFlowError
from contactflow.core.logging import get_logger
from contactflow.dynamics.cds import ContactDynamicalSystem, Provenance, compose, cross_check, identity_system, invert
from contactflow.dynamics.charts import ContactChart, chart_from_spec
from contactflow.dynamics.flow import integrate_flow, pullback_residual
from contactflow.dynamics.hamfield import defining_residuals
from contactflow.runner.expressions import ExpressionContext, resolve_system
from contactflow.schemas.experiment import ExperimentConfig, ExperimentSpec, ToleranceSection
from contactflow.schemas.nonsmooth import LipschitzCertificate, TruncationDiagnostics
from contactflow.schemas.pipeline import Schedule
from contactflow.schemas.report import ResultRow, RunReport

logger = get_logger(__name__)

# below this the halving ratio measures round-off, not the integrator
HALVING_FLOOR = 1e-13


# ==========================================
# Run context
# ==========================================


@dataclass
class SuiteContext:
    """Chart, grids, sample cloud and named systems shared by the experiments of one run."""

    config: ExperimentConfig
    chart: ContactChart
    grid: SpatialGrid
    points: np.ndarray
    expressions: ExpressionContext
    grid_hash: str

    @property
    def seed(self) -> int:
        return self.config.run.seed

    @property
    def tolerances(self):
        return self.config.tolerances

    def knots(self, system: ContactDynamicalSystem) -> np.ndarray:
        return time_knots(system.interval, self.config.grid.time_knots)

    def resolve(self, expression: str) -> ContactDynamicalSystem:
        return resolve_system(expression, self.expressions)

    def system(self, experiment: ExperimentSpec) -> ContactDynamicalSystem:
        return self.resolve(experiment.expression)

    def recorder(self, experiment: ExperimentSpec) -> "RowRecorder":
        return RowRecorder(experiment.name, {"grid_hash": self.grid_hash, "seed": self.seed})


class RowRecorder(list):
    """Result rows of one experiment, stamped with the run's grid hash and seed."""

    def __init__(self, experiment: str, stamp: Optional[dict[str, Any]] = None):
        super().__init__()
        self.experiment = experiment
        self.stamp = stamp or {}

    def check(
        self, anchor: str, quantity: str, measured: float, required: float, relation: str = "<=", **extra
    ) -> None:
        row = ResultRow.check(anchor, self.experiment, quantity, measured, required, relation, **self.stamp, **extra)
        self.append(row)

    def info(self, anchor: str, quantity: str, measured: float, **extra) -> None:
        self.append(ResultRow.info(anchor, self.experiment, quantity, measured, **self.stamp, **extra))


def build_context(config: ExperimentConfig) -> SuiteContext:
    """
    Raises:
        ConfigError: The chart or grid sections describe no valid chart or grid
    """
    try:
        chart = chart_from_spec(config.chart)
        grid = make_grid(chart, config.grid.counts, config.grid.box)
        points = sample_points(chart, config.grid.sample_points, config.run.seed, inner_box(chart))
    except ContactFlowError as e:
        logger.error(f"Invalid chart or grid: {e}")
        raise ConfigError(f"invalid chart or grid: {e}") from e
    expressions = ExpressionContext(chart, config.hamiltonians, grid, config.integrator.step, config.grid.time_knots)
    spec = grid.spec_with(time_knots((0.0, 1.0), config.grid.time_knots), config.run.seed)
    return SuiteContext(config, chart, grid, points, expressions, spec.digest())


# ==========================================
# verify
# ==========================================


def _halving(system: ContactDynamicalSystem, points: np.ndarray, step: float) -> tuple[float, float]:
    """Distances of the step and step/2 integrations to the step/4 one at the end time."""
    field = system.hamiltonian.field()
    t = system.interval[1]
    coarse, half, fine = (integrate_flow(field, step=s)(t, points) for s in (step, 0.5 * step, 0.25 * step))
    chart = system.chart
    return float(np.max(chart.point_distance(coarse, fine))), float(np.max(chart.point_distance(half, fine)))


def run_verify(experiment: ExperimentSpec, ctx: SuiteContext) -> list[ResultRow]:
    """Pullback identity, defining relations, conformal factor and oracle cross-checks of one system."""
    system = ctx.system(experiment)
    params = experiment.params
    tol = ctx.tolerances
    points = ctx.points
    knots = ctx.knots(system)
    times = [float(t) for t in params.get("times", [system.interval[1]])]
    rows = ctx.recorder(experiment)

    h = system.conformal_factor
    for t in times:
        residual = pullback_residual(system.flow, h, t, points, ctx.config.integrator.fd_step)
        rows.check("flow.pullback_residual", f"pullback_residual@{t:g}", residual, tol.pullback)

    field = system.hamiltonian.field()
    for t in times:
        first, second = defining_residuals(field, t, points)
        rows.check("hamfield.defining_residuals", f"alpha_residual@{t:g}", first, tol.cross_check)
        rows.check("hamfield.defining_residuals", f"dalpha_residual@{t:g}", second, tol.cross_check)

    sup_h = metrics.conformal_sup(system.flow, points, knots)
    if system.hamiltonian.is_basic or params.get("strict_contact", False):
        rows.check("cds.conformal_factor", "conformal_sup", sup_h, tol.pullback)
    else:
        rows.info("cds.conformal_factor", "conformal_sup", sup_h)

    if system.provenance is Provenance.ALGEBRAIC and system.flow.is_identity_based:
        gap = cross_check(system, points, knots, ctx.config.integrator.step)
        rows.check("cds.cross_check", "oracle_distance", gap, tol.cross_check)

    if params.get("group_law", False):
        loop = compose(system, invert(system))
        residue = max(float(np.max(np.abs(loop.hamiltonian.value(t, ctx.grid.points)))) for t in knots)
        rows.check("cds.compose", "compose_with_inverse_sup", residue, settings.FD_TOLERANCE)

    if params.get("halving", False):
        coarse, half = _halving(system, points, float(params.get("halving_step", 0.05)))
        if half <= HALVING_FLOOR:
            rows.info("flow.integrate_flow", "halving_ratio", np.inf, note="at round-off")
        else:
            rows.check("flow.integrate_flow", "halving_ratio", coarse / half, 8.0, ">=")
    return rows


# ==========================================
# metrics
# ==========================================


def _refined(grid: SpatialGrid) -> SpatialGrid:
    return make_grid(grid.chart, [2 * c for c in grid.counts], grid.box)


def run_metrics(experiment: ExperimentSpec, ctx: SuiteContext) -> list[ResultRow]:
    """Norms, the contact distance to a reference, energy bounds and displacement of a box K."""
    system = ctx.system(experiment)
    params = experiment.params
    kind = params.get("norm", "L1inf")
    grid, points = ctx.grid, ctx.points
    knots = ctx.knots(system)
    H = system.hamiltonian
    rows = ctx.recorder(experiment)

    l1 = metrics.ham_norm(H, "L1inf", grid, knots=knots).value
    sup = metrics.ham_norm(H, "Linf", grid, knots=knots).value
    length = system.interval[1] - system.interval[0]
    rows.info("metrics.ham_norm", "L1inf", l1)
    rows.info("metrics.ham_norm", "Linf", sup)
    rows.check("metrics.ham_norm", "L1inf_le_Linf", l1, length * sup + 1e-12)
    rows.info("metrics.lipschitz_in_time", "lipschitz_in_time", metrics.lipschitz_in_time(H, grid, knots))

    if "reference" in params:
        reference = ctx.resolve(params["reference"])
    else:
        reference = identity_system(ctx.chart, system.interval)
    distance = metrics.contact_distance(system, reference, kind, grid, knots, points)
    for part in ("c0_component", "conformal_component", "hamiltonian_component", "total"):
        rows.info("metrics.contact_distance", f"distance_{part}", getattr(distance, part), note=reference.name)

    candidates = [system] + [ctx.resolve(e) for e in params.get("candidates", [])]
    estimate = metrics.energy_upper_bound(system, candidates, grid, points, kind, knots, ctx.tolerances.match)
    own = l1 if kind == "L1inf" else sup
    rows.check(
        "metrics.energy_upper_bound", "energy_upper_bound", estimate.upper_bound, own + 1e-12, note=estimate.witness
    )

    identity = identity_system(ctx.chart)
    zero = metrics.energy_upper_bound(identity, [identity], grid, points, kind, tolerance=ctx.tolerances.match)
    rows.check("metrics.energy_upper_bound", "identity_energy", zero.upper_bound, settings.ZERO_NORM_TOLERANCE)

    K = params.get("K")
    if K is not None:
        counts = params.get("K_counts", 16)
        displaced = metrics.displacement_check(system.flow, K, counts)
        rows.check("metrics.displacement_check", "displaces_K", float(displaced), 1.0, ">=")
        envelope = metrics.energy_capacity_envelope(candidates, K, grid, counts, kind)
        if envelope.minimum is None:
            note = "no system displaces K"
            rows.info("metrics.energy_capacity_envelope", "envelope_minimum", np.nan, warning=True, note=note)
        else:
            rows.check("metrics.energy_capacity_envelope", "envelope_minimum", envelope.minimum, 0.0, ">")
            if params.get("refine", False):
                finer = metrics.energy_capacity_envelope(candidates, K, _refined(grid), counts, kind).minimum
                drift = np.inf if finer is None else abs(finer - envelope.minimum) / envelope.minimum
                rows.check("metrics.energy_capacity_envelope", "envelope_refinement_drift", drift, 0.05)
    return rows


# ==========================================
# regularize
# ==========================================


def run_regularize(experiment: ExperimentSpec, ctx: SuiteContext) -> list[ResultRow]:
    """A small loop that makes the isotopy regular, then its constant-speed reparameterization."""
    system = ctx.system(experiment)
    params = experiment.params
    H = system.hamiltonian
    grid = ctx.grid
    center, radius = default_loop_center(ctx.chart)
    rows = ctx.recorder(experiment)

    if ctx.chart.is_torus or H.is_basic:
        basic = regularize_basic(H, center, params.get("forbidden", []))
        rows.info("regularize.regularize_basic", "zero_count", len(basic.zeros))
        rows.check("regularize.regularize_basic", "forbidden_distance", basic.forbidden_distance, 0.0, ">")
        partner = params.get("partner")
        if partner is not None:
            G2 = ctx.resolve(partner).hamiltonian
            minor = basic_obstruction_minors(H, G2, center, ctx.knots(system))
            rows.check("regularize.basic_obstruction_minors", "max_minor", minor, settings.FD_TOLERANCE)
        return rows

    knots = ctx.knots(system)
    own = metrics.ham_norm(H, "L1inf", grid, knots=knots).value
    ratio = float(params.get("smallness_ratio", 0.05))
    variation = build_variation(ctx.chart, center, int(params.get("planes", 1)), radius)
    found = regularize_isotopy(
        H,
        variation,
        float(params.get("eps_box", 0.1)),
        grid,
        knots=int(params.get("search_knots", 100)),
        smallness=ratio * own,
    )
    rows.check("regularize.regularize_isotopy", "margin", found.margin, 0.0, ">")
    rows.check("regularize.regularize_isotopy", "fine_margin", found.fine_margin, 0.0, ">")
    rows.check("regularize.regularize_isotopy", "loop_L1inf", found.loop_norm, ratio * own, "<")

    G = found.difference_system.hamiltonian
    G_zeta, _ = constant_speed(G, grid)
    spread = speed_ratio(G_zeta, grid, int(params.get("speed_knots", 200)))
    rows.check("reparam.constant_speed", "speed_ratio", spread, 1.0 + settings.SPEED_DEVIATION_BUDGET)
    return rows


# ==========================================
# mainlemma
# ==========================================


def _schedule(params: dict[str, Any]) -> Schedule:
    try:
        return Schedule(depth=int(params.get("depth", 3)), epsilons=params.get("epsilons"), knots=params.get("knots"))
    except ValidationError as e:
        raise ConfigError(f"invalid schedule: {e.errors()[0]['msg']}") from e


def run_mainlemma(experiment: ExperimentSpec, ctx: SuiteContext) -> list[ResultRow]:
    """Synthesis on a perturbation sequence of one system; every trace record becomes a row."""
    system = ctx.system(experiment)
    params = experiment.params
    schedule = _schedule(params)
    systems = perturbation_sequence(
        system, schedule, schedule.depth + 1, float(params.get("scale", 0.01)), ctx.config.integrator.step
    )
    _, trace = synthesize(
        systems,
        schedule,
        ctx.grid,
        mode=params.get("mode", "near_identity"),
        epsilon=float(params.get("epsilon", 0.5)),
        strict=bool(params.get("strict_contact", False)),
        seed=ctx.seed,
        raise_on_failure=False,
    )
    rows = ctx.recorder(experiment)
    rows.info("mainlemma.synthesize", "head_index", trace.head_index)
    for record in trace.records:
        rows.append(
            ResultRow(
                anchor="mainlemma.synthesize",
                experiment=experiment.name,
                quantity=f"stage{record.stage}.{record.quantity}",
                measured=record.measured,
                required=record.required,
                relation=record.relation,
                passed=record.passed,
                warning=record.estimated,
                note=record.note,
                **rows.stamp,
            )
        )
    return rows


# ==========================================
# nonsmooth
# ==========================================


def gallery_from_params(params: dict[str, Any]) -> tuple[nonsmooth.RhoProfile, nonsmooth.CutoffEta]:
    profile = nonsmooth.RhoProfile(
        exponent=float(params.get("a", 1.0)),
        splice=float(params.get("splice", 0.5)),
        outer=float(params.get("outer", 0.9)),
        first_radius=float(params.get("first_radius", 0.25)),
        ratio=float(params.get("ratio", 0.5)),
    )
    eta = nonsmooth.CutoffEta(plateau=float(params.get("plateau", 1.0)), width=float(params.get("width", 1.0)))
    return profile, eta


def certificate_rows(certificate: LipschitzCertificate, rows: RowRecorder) -> RowRecorder:
    """Quotient and gap rows of a Lipschitz certificate; shared with the `nonsmooth` command."""
    anchor = "nonsmooth.lipschitz_certificate"
    for row in certificate.rows:
        note = f"s_k={row.s_k!r} s_k'={row.s_k_prime!r}"
        rows.check(anchor, f"quotient_k{row.k}", row.quotient, row.bound, ">", note=note)
        rows.check(anchor, f"gap_k{row.k}", row.s_k - row.s_k_prime, row.s_k ** (1.0 + certificate.delta), "<")
    rows.check(anchor, "quotients_increasing", float(certificate.monotone), 1.0, ">=")
    if certificate.excluded:
        note = f"smallest usable s_k {certificate.smallest_usable!r}"
        rows.info(anchor, "excluded_indices", len(certificate.excluded), warning=True, note=note)
    return rows


def _truncation_rows(table: TruncationDiagnostics, rows: RowRecorder, tol: ToleranceSection) -> None:
    anchor = "nonsmooth.truncation_sequence_diagnostics"
    spread = float(np.exp(table.growth_constant))
    for index in table.indices:
        rows.check(anchor, f"radius_ratio_max_j{index.j}", index.radius_ratio_max, spread)
        rows.check(anchor, f"radius_ratio_min_j{index.j}", index.radius_ratio_min, 1.0 / spread, ">=")
        rows.check(anchor, f"slab_conformal_j{index.j}", index.conformal_on_invariant_slab, tol.integrator)
    for pair in table.pairs:
        label = f"j{pair.j}_k{pair.k}"
        rows.check(anchor, f"hamiltonian_gap_{label}", pair.hamiltonian_gap, pair.hamiltonian_bound + tol.closed_form)
        rows.check(anchor, f"stabilized_gap_{label}", pair.stabilized_gap, tol.closed_form)
        rows.info(anchor, f"flow_gap_{label}", pair.flow_gap)
        rows.info(anchor, f"radial_field_gap_{label}", pair.radial_field_gap)
    rows.check(anchor, "slab_radii_monotone", float(table.radii_monotone), 1.0, ">=")


def run_nonsmooth(experiment: ExperimentSpec, ctx: SuiteContext) -> list[ResultRow]:
    """The certificate table and, on request, truncation, axis, homeomorphism, conjugacy and displacement checks."""
    params = experiment.params
    tol = ctx.tolerances
    profile, eta = gallery_from_params(params)
    delta = float(params.get("delta", 0.5))
    certificate = nonsmooth.lipschitz_certificate(profile, eta, delta, params.get("ks"), params.get("kmax"))
    rows = certificate_rows(certificate, ctx.recorder(experiment))

    chart = nonsmooth.gallery_chart(profile, eta, int(params.get("n", 1)))
    step = ctx.config.integrator.step

    indices = params.get("diagnostics")
    if indices:
        support = nonsmooth.gallery_support(chart.n, profile, eta)
        grid = make_grid(chart, params.get("diagnostics_counts", 12), support)
        table = nonsmooth.truncation_sequence_diagnostics(
            profile,
            eta,
            chart,
            indices,
            grid,
            int(params.get("trajectories", 64)),
            seed=ctx.seed,
            step=step,
            workers=ctx.config.run.workers,
        )
        _truncation_rows(table, rows, tol)

    if "axis" in params:
        anchor = "nonsmooth.axis_flow_check"
        axis = nonsmooth.axis_flow_check(profile, eta, chart, int(params["axis"]), step=step)
        rows.check(anchor, "planar_drift", axis.planar_drift, tol.closed_form)
        rows.check(anchor, "ode_gap", axis.ode_gap, tol.integrator)
        rows.info(anchor, "limit_gap", axis.limit_gap)

    if params.get("homeomorphism", False):
        anchor = "nonsmooth.homeomorphism_checks"
        count = int(params.get("samples", 2000))
        homeo = nonsmooth.homeomorphism_checks(profile, eta, chart, count=count, seed=ctx.seed)
        rows.check(anchor, "collisions", homeo.collisions, 0.0)
        rows.check(anchor, "surjectivity_residual", homeo.surjectivity_residual, tol.closed_form)
        rows.check(anchor, "round_trip_residual", homeo.round_trip_residual, tol.closed_form)
        rows.check(anchor, "radius_change", homeo.radius_change, tol.closed_form)
        rows.info(anchor, "min_separation_ratio", homeo.min_separation_ratio)

    if params.get("conjugacy", False):
        anchor = "nonsmooth.conjugate_fields_example"
        seeds, times = int(params.get("seeds", settings.SAMPLE_POINTS)), int(params.get("conjugacy_times", 10))
        _, _, conj = nonsmooth.conjugate_fields_example(profile, eta, chart, seeds, times, ctx.seed, step)
        rows.check(anchor, "definitional_gap", conj.definitional_gap, tol.closed_form)
        limit = float(params.get("conjugacy_tolerance", 1e-4))
        rows.check(anchor, "conjugacy_residual", conj.conjugacy_residual, limit)
        rows.check(anchor, "ellipse_ratio_error", abs(conj.ellipse_ratio - 4.0), 1e-9)
        rows.info(anchor, "gradient_near_axis", conj.gradient_near_axis)

    if params.get("displacement", False):
        rotation = nonsmooth.rotation_system(chart)
        displaced = metrics.displacement_check(rotation.flow, nonsmooth.annular_sector(chart))
        rows.check("metrics.displacement_check", "rotation_displaces_sector", float(displaced), 1.0, ">=")
    return rows


# ==========================================
# Suite registration and execution
# ==========================================

SuiteHandler = Callable[[ExperimentSpec, SuiteContext], list[ResultRow]]

# Suite name to handler mapping
SUITE_HANDLERS: dict[str, SuiteHandler] = {
    "verify": run_verify,
    "metrics": run_metrics,
    "regularize": run_regularize,
    "mainlemma": run_mainlemma,
    "nonsmooth": run_nonsmooth,
}


def run_experiment(experiment: ExperimentSpec, ctx: SuiteContext) -> list[ResultRow]:
    """
    Run one experiment. Construction failures become a failed row; config errors propagate.

    Raises:
        ConfigError: The experiment's expression or parameters do not resolve
    """
    logger.info(f"Running {experiment.suite} experiment '{experiment.name}'")
    try:
        rows = SUITE_HANDLERS[experiment.suite](experiment, ctx)
    except ConfigError:
        raise
    except ContactFlowError as e:
        logger.error(f"Experiment '{experiment.name}' failed: {e}")
        return [
            ResultRow(
                anchor=f"{experiment.suite}.run",
                experiment=experiment.name,
                quantity="error",
                measured=np.nan,
                relation="info",
                passed=False,
                grid_hash=ctx.grid_hash,
                seed=ctx.seed,
                note=f"{type(e).__name__}: {e}",
            )
        ]
    failed = sum(not row.passed for row in rows)
    logger.info(f"Experiment '{experiment.name}': {len(rows)} row(s), {failed} failed")
    return rows


def _apply_strict(rows: list[ResultRow]) -> list[ResultRow]:
    out = []
    for row in rows:
        if row.warning:
            row = row.model_copy(update={"passed": False, "note": f"{row.note} (warning, strict)".strip()})
        out.append(row)
    return out


def run_suites(
    config: ExperimentConfig,
    source: str = "<config>",
    suite: Optional[str] = None,
    workers: Optional[int] = None,
    strict: Optional[bool] = None,
) -> RunReport:
    """
    Run the config's experiments (optionally one suite only) in parallel and
    assemble their rows in config order.

    Raises:
        ConfigError: Unknown suite, invalid chart or grid, unresolvable expressions
    """
    if suite is not None and suite not in SUITE_HANDLERS:
        raise ConfigError(f"unknown suite '{suite}'")
    workers = config.run.workers if workers is None else workers
    strict = config.run.strict if strict is None else strict
    experiments = [e for e in config.experiments if suite is None or e.suite == suite]
    ctx = build_context(config)
    logger.info(f"Running {len(experiments)} experiment(s) from {source} with {workers} worker(s)")

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(lambda e: run_experiment(e, ctx), experiments))

    rows = [row for chunk in results for row in chunk]
    if strict:
        rows = _apply_strict(rows)
    report = RunReport(
        source=source,
        suite=suite,
        seed=config.run.seed,
        strict=strict,
        grid_hash=ctx.grid_hash,
        experiments=[e.name for e in experiments],
        rows=rows,
    )
    logger.info(f"Run finished: {len(rows)} row(s), {len(report.failures())} failure(s)")
    return report
