"""
Reparameterization of Hamiltonians in time.

For zeta: [a, b] -> [c, d] the reparameterized Hamiltonian is
    H^zeta(t, x) = zeta'(t) H(zeta(t), x),
whose flow is phi_H^{zeta(t)} with conformal factor h_{zeta(t)}. This module
builds the reparameterization functions used by the constructions: linear
rescalings, boundary-flat templates, loops and constant-speed inversions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from contactflow.analysis import metrics
from contactflow.analysis.grids import SpatialGrid, inner_box, sample_points, segment_knots, time_knots
from contactflow.core.config import settings
from contactflow.core.errors import FlatteningError, RegularityError, ReparamError, TimeRangeError
from contactflow.core.logging import get_logger
from contactflow.dynamics.cds import CompositeHamiltonian, ContactDynamicalSystem, Provenance
from contactflow.dynamics.flow import ConcatenatedFlow, PiecewiseFlow, ReparamFlow
from contactflow.dynamics.hamfield import TIME_SLACK, Hamiltonian, difference
from contactflow.dynamics.profiles import smooth_step, step_integral

logger = get_logger(__name__)

ScalarFn = Callable[[np.ndarray], np.ndarray]


# ==========================================
# Reparameterization functions
# ==========================================


@dataclass(frozen=True, eq=False)
class ReparamFn:
    """
    A time change zeta: [a, b] -> [c, d] with its derivative.

    Attributes:
        interval: Domain [a, b]
        target: Range [c, d], the interval of the Hamiltonian being reparameterized
        value: zeta
        derivative: zeta'
        monotone: zeta' >= 0
        boundary_flat: zeta' vanishes on [a, a + flat_width] and [b - flat_width, b]
        linear: zeta is affine
        partial: zeta(b) is allowed to stop short of an endpoint of the target
        breakpoints: Times where zeta' changes regime, used for quadrature knots
        parameters: Construction parameters recorded for reports
    """

    interval: tuple[float, float]
    value: ScalarFn
    derivative: ScalarFn
    target: tuple[float, float] = (0.0, 1.0)
    name: str = "zeta"
    monotone: bool = True
    boundary_flat: bool = False
    linear: bool = False
    partial: bool = False
    flat_width: float = 0.0
    breakpoints: tuple[float, ...] = ()
    parameters: dict[str, float] = field(default_factory=dict)

    def __call__(self, t):
        return self.value(t)

    @property
    def is_loop(self) -> bool:
        a, b = self.interval
        return abs(float(self.value(b)) - float(self.value(a))) <= 1e-12

    def check(self, samples: int = 201, tol: float = 1e-9) -> "ReparamFn":
        """
        Raises:
            ReparamError: Range or endpoint or monotonicity violation on the samples
        """
        a, b = self.interval
        if not a < b:
            raise ReparamError(f"{self.name}: empty interval [{a}, {b}]")
        c, d = self.target
        t = np.linspace(a, b, samples)
        values = np.asarray(self.value(t), dtype=float)
        if np.any(values < c - tol) or np.any(values > d + tol):
            raise ReparamError(f"{self.name} leaves [{c}, {d}]")
        ends = (float(values[0]), float(values[-1]))
        allowed = (ends[0],) if self.partial else ends
        for end in allowed:
            if min(abs(end - c), abs(end - d)) > tol:
                raise ReparamError(f"{self.name}: endpoint value {end} is not an end of [{c}, {d}]")
        if self.monotone and np.any(np.asarray(self.derivative(t)) < -tol):
            raise ReparamError(f"{self.name} is tagged monotone but decreases")
        return self


def identity(interval: tuple[float, float] = (0.0, 1.0)) -> ReparamFn:
    return linear(*interval, target=interval)


def linear(a: float, b: float, target: tuple[float, float] = (0.0, 1.0)) -> ReparamFn:
    """zeta_{a,b}: the increasing affine map [a, b] -> target."""
    if not a < b:
        raise ReparamError(f"rescaling needs a < b, got a={a}, b={b}")
    c, d = target
    slope = (d - c) / (b - a)
    return ReparamFn(
        interval=(float(a), float(b)),
        value=lambda t: c + slope * (np.asarray(t, dtype=float) - a),
        derivative=lambda t: np.full_like(np.asarray(t, dtype=float), slope),
        target=(float(c), float(d)),
        name=f"linear({a:g},{b:g})",
        linear=True,
        parameters={"a": float(a), "b": float(b)},
    )


def scale(s: float) -> ReparamFn:
    """zeta(t) = s t on [0, 1]; stops at phi^s, so its end value is partial."""
    if not 0.0 <= s <= 1.0:
        raise ReparamError(f"scale factor {s} outside [0, 1]")
    return ReparamFn(
        interval=(0.0, 1.0),
        value=lambda t: s * np.asarray(t, dtype=float),
        derivative=lambda t: np.full_like(np.asarray(t, dtype=float), s),
        name=f"scale({s:g})",
        linear=True,
        partial=True,
        parameters={"s": float(s)},
    )


def flat(delta: float, interval: tuple[float, float] = (0.0, 1.0)) -> ReparamFn:
    """
    Boundary-flat template with zeta' = 0 within delta (relative width) of
    both ends and zeta' = 1/(1 - 3 delta) on the middle plateau.

    With u = (t - a)/(b - a) and Sint the step integral,
        zeta = a + (b - a) delta (Sint((u - delta)/delta) - Sint((u - 1 + 2 delta)/delta)) / (1 - 3 delta).
    """
    if not 0.0 < delta <= 0.25:
        raise ReparamError(f"flat template width {delta} outside (0, 1/4]")
    a, b = interval
    length = b - a
    sint = step_integral()
    norm = 1.0 - 3.0 * delta

    def value(t):
        u = (np.asarray(t, dtype=float) - a) / length
        shape = delta * (sint((u - delta) / delta) - sint((u - 1.0 + 2.0 * delta) / delta))
        return a + length * np.clip(shape / norm, 0.0, 1.0)

    def derivative(t):
        u = (np.asarray(t, dtype=float) - a) / length
        return (smooth_step((u - delta) / delta) - smooth_step((u - 1.0 + 2.0 * delta) / delta)) / norm

    edges = (a + delta * length, a + 2 * delta * length, b - 2 * delta * length, b - delta * length)
    return ReparamFn(
        interval=(a, b),
        value=value,
        derivative=derivative,
        target=(a, b),
        name=f"flat({delta:.3g})",
        boundary_flat=True,
        flat_width=delta * length,
        breakpoints=edges,
        parameters={"delta": float(delta)},
    )


def round_trip(interval: tuple[float, float] = (0.0, 1.0)) -> ReparamFn:
    """zeta(t) = sin^2(pi u): out to the end of the target and back, a loop."""
    a, b = interval
    length = b - a
    return ReparamFn(
        interval=(a, b),
        value=lambda t: np.sin(np.pi * (np.asarray(t, dtype=float) - a) / length) ** 2,
        derivative=lambda t: np.pi * np.sin(2 * np.pi * (np.asarray(t, dtype=float) - a) / length) / length,
        name="round_trip",
        monotone=False,
        breakpoints=(a + 0.5 * length,),
    )


# ==========================================
# Reparameterized Hamiltonians
# ==========================================


class ReparamHamiltonian(Hamiltonian):
    """H^zeta(t, x) = zeta'(t) H(zeta(t), x)."""

    kind = "reparam"

    def __init__(self, H: Hamiltonian, zeta: ReparamFn, name: Optional[str] = None):
        if abs(zeta.target[0] - H.interval[0]) > TIME_SLACK or abs(zeta.target[1] - H.interval[1]) > TIME_SLACK:
            raise TimeRangeError(f"{zeta.name} maps onto {zeta.target}, {H.name} lives on {H.interval}")
        super().__init__(H.chart, zeta.interval, H.support, name or f"{H.name}^{zeta.name}")
        self.base = H
        self.zeta = zeta

    def _time(self, t: float) -> float:
        return self.base.check_time(float(self.zeta.value(t)))

    def _evaluate(self, t, points):
        return float(self.zeta.derivative(t)) * self.base._evaluate(self._time(t), points)

    def _gradient(self, t, points):
        return float(self.zeta.derivative(t)) * self.base._gradient(self._time(t), points)

    def _pulled_back(self, s: float) -> float:
        """Time t with zeta(t) = s for affine zeta."""
        (a, b), (c, d) = self.zeta.interval, self.zeta.target
        return a + (s - c) * (b - a) / (d - c)

    @property
    def breakpoints(self):
        times = set(self.interval) | set(self.zeta.breakpoints)
        if self.zeta.linear and not self.zeta.partial:
            times |= {self._pulled_back(s) for s in self.base.breakpoints}
        return tuple(sorted(times))

    @property
    def is_autonomous(self):
        return self.base.is_autonomous and self.zeta.linear

    @property
    def is_basic(self):
        return self.base.is_basic

    @property
    def flat_margin(self):
        if self.zeta.boundary_flat:
            return self.zeta.flat_width
        if self.zeta.linear and not self.zeta.partial and self.base.flat_margin is not None:
            (a, b), (c, d) = self.zeta.interval, self.zeta.target
            return self.base.flat_margin * (b - a) / (d - c)
        return None

    def closed_form_flow(self):
        closed = self.base.closed_form_flow()
        if closed is None:
            return None
        forward, inverse = closed

        def fwd(t, points):
            return forward(self._time(t), points)

        def inv(t, points):
            return inverse(self._time(t), points)

        return fwd, inv


def reparameterize(H: Hamiltonian, zeta: ReparamFn) -> ReparamHamiltonian:
    """
    Raises:
        ReparamError: zeta leaves its target or has invalid endpoints
        TimeRangeError: zeta does not map onto the interval of H
    """
    return ReparamHamiltonian(H, zeta.check())


def reparameterize_system(system: ContactDynamicalSystem, zeta: ReparamFn) -> ContactDynamicalSystem:
    """The system (phi^{zeta(t)}, H^zeta, h_{zeta(t)}), reusing the flow of the input."""
    H = reparameterize(system.hamiltonian, zeta)
    flow = ReparamFlow(system.flow, zeta.value, zeta.interval, H, f"{system.flow.name}^{zeta.name}")
    return ContactDynamicalSystem(H, flow, Provenance.ALGEBRAIC, H.name)


def rescale_interval(H: Hamiltonian, a: float, b: float) -> ReparamHamiltonian:
    """H^{a,b}(t, x) = H(zeta_{a,b}(t), x) / (b - a) on [a, b]."""
    return reparameterize(H, linear(a, b, target=H.interval))


def rescale_system(system: ContactDynamicalSystem, a: float, b: float) -> ContactDynamicalSystem:
    return reparameterize_system(system, linear(a, b, target=system.interval))


def reparam_knots(H: Hamiltonian, per_segment: int = 17) -> np.ndarray:
    """Quadrature knots resolving the regimes of a (possibly reparameterized) Hamiltonian."""
    return segment_knots(H.interval, H.breakpoints, per_segment)


# ==========================================
# Boundary flattening
# ==========================================


class FlatteningResult(NamedTuple):
    hamiltonian: ReparamHamiltonian
    zeta: ReparamFn
    delta: float
    certified_bound: float
    l1inf_before: float
    l1inf_after: float
    linf_before: float
    linf_after: float


def flattening_bound(zeta: ReparamFn, lipschitz: float, sup_norm: float, samples: int = 4001) -> float:
    """
    Certified bound on ||H - H^zeta||_(1,inf) against the identity time change:
    3 L max|zeta - id| + ||H||_inf integral |zeta' - 1|.
    """
    t = np.linspace(*zeta.interval, samples)
    drift = float(np.max(np.abs(zeta.value(t) - t)))
    slack = float(np.trapezoid(np.abs(zeta.derivative(t) - 1.0), t))
    return 3.0 * lipschitz * drift + sup_norm * slack


def boundary_flatten(
    H: Hamiltonian,
    epsilon: float,
    grid: SpatialGrid,
    knots: Optional[Sequence[float]] = None,
) -> FlatteningResult:
    """
    Reparameterize H to be boundary flat with the same endpoint maps.

    The template width is the largest delta (by bisection) whose certified
    bound stays below epsilon and whose sup-norm inflation
    ||H||_inf * 3 delta / (1 - 3 delta) stays below epsilon.

    Raises:
        FlatteningError: Even the narrowest template misses epsilon
    """
    if epsilon <= 0:
        raise ReparamError(f"epsilon must be positive, got {epsilon}")
    knots = time_knots(H.interval, settings.TIME_KNOTS) if knots is None else np.asarray(knots)
    l1 = metrics.ham_norm(H, "L1inf", grid, knots=knots).value
    sup = metrics.ham_norm(H, "Linf", grid, knots=knots).value
    if H.flat_margin is not None and H.flat_margin > 0:
        zeta = identity(H.interval)
        logger.info(f"{H.name} is already boundary flat; identity accepted")
        same = ReparamHamiltonian(H, zeta)
        return FlatteningResult(same, zeta, 0.0, 0.0, l1, l1, sup, sup)

    lipschitz = metrics.lipschitz_in_time(H, grid, knots)

    def excess(delta: float) -> float:
        certified = flattening_bound(flat(delta, H.interval), lipschitz, sup)
        inflation = sup * 3.0 * delta / (1.0 - 3.0 * delta)
        return max(certified, inflation) - epsilon

    lo, hi = settings.FLAT_DELTA_MIN, settings.FLAT_DELTA_MAX
    if excess(lo) >= 0:
        raise FlatteningError(epsilon, excess(lo) + epsilon)
    if excess(hi) < 0:
        delta = hi
    else:
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if excess(mid) < 0 else (lo, mid)
        delta = lo
    zeta = flat(delta, H.interval)
    flattened = ReparamHamiltonian(H, zeta)
    fine = reparam_knots(flattened)
    after_l1 = metrics.ham_norm(flattened, "L1inf", grid, knots=fine).value
    after_sup = metrics.ham_norm(flattened, "Linf", grid, knots=fine).value
    bound = flattening_bound(zeta, lipschitz, sup)
    logger.info(
        f"Flattened {H.name}: delta={delta:.3e}, certified {bound:.3e} < {epsilon:.3e}, "
        f"L1inf {l1:.6g} -> {after_l1:.6g}, Linf {sup:.6g} -> {after_sup:.6g}"
    )
    return FlatteningResult(flattened, zeta, delta, bound, l1, after_l1, sup, after_sup)


def flatten_system(
    system: ContactDynamicalSystem, epsilon: float, grid: SpatialGrid, knots: Optional[Sequence[float]] = None
) -> tuple[ContactDynamicalSystem, FlatteningResult]:
    result = boundary_flatten(system.hamiltonian, epsilon, grid, knots)
    return reparameterize_system(system, result.zeta), result


# ==========================================
# Constant speed
# ==========================================


def _invert_eta(knots: np.ndarray, eta: np.ndarray, name: str, parameters: dict[str, float]) -> ReparamFn:
    """zeta = eta^{-1} from a sampled increasing eta with eta(a) = a, eta(b) = b, C1 by PCHIP."""
    a, b = float(knots[0]), float(knots[-1])
    eta = np.maximum.accumulate(np.clip(eta, a, b))
    eta[0], eta[-1] = a, b
    forward = PchipInterpolator(knots, eta)
    targets = np.linspace(a, b, settings.SPEED_TABLE_KNOTS)
    inverse = np.empty_like(targets)
    inverse[0], inverse[-1] = a, b
    for j, s in enumerate(targets[1:-1], start=1):
        inverse[j] = brentq(lambda t: float(forward(t)) - s, a, b, xtol=1e-14)
    spline = PchipInterpolator(targets, inverse)
    slope = spline.derivative()
    return ReparamFn(
        interval=(a, b),
        value=lambda t: np.clip(spline(t), a, b),
        derivative=lambda t: slope(t),
        target=(a, b),
        name=name,
        parameters=parameters,
    )


def speed_ratio(H: Hamiltonian, grid: SpatialGrid, count: int = 200) -> float:
    """max_t ||H_t|| / min_t ||H_t|| on uniform knots."""
    norms = metrics.slice_norms(H, grid, time_knots(H.interval, count))
    return float(np.max(norms) / np.min(norms)) if np.min(norms) > 0 else float("inf")


def _sampled_speeds(G: Hamiltonian, grid: SpatialGrid, knots: np.ndarray) -> np.ndarray:
    speeds = metrics.slice_norms(G, grid, knots)
    worst = int(np.argmin(speeds))
    if speeds[worst] <= settings.ZERO_NORM_TOLERANCE:
        raise RegularityError(float(knots[worst]), float(speeds[worst]))
    return speeds


def constant_speed(G: Hamiltonian, grid: SpatialGrid) -> tuple[ReparamHamiltonian, ReparamFn]:
    """
    Reparameterize G so that ||G^zeta_t|| is constant, equal to ||G||_(1,inf).

    eta(t) = a + (b - a) int_a^t ||G_s|| ds / int_a^b ||G_s|| ds is tabulated
    on SPEED_TABLE_KNOTS knots and inverted.

    Raises:
        RegularityError: ||G_t|| vanishes at a sampled time
    """
    a, b = G.interval
    knots = time_knots(G.interval, settings.SPEED_TABLE_KNOTS)
    speeds = _sampled_speeds(G, grid, knots)
    cumulative = cumulative_simpson(speeds, x=knots, initial=0.0)
    total = float(cumulative[-1])
    zeta = _invert_eta(knots, a + (b - a) * cumulative / total, "constspeed", {"speed": total / (b - a)})
    result = ReparamHamiltonian(G, zeta)
    ratio = speed_ratio(result, grid)
    if ratio > 1.0 + settings.SPEED_DEVIATION_BUDGET:
        logger.warning(f"Constant-speed {G.name}: max/min speed {ratio:.4f} above budget")
    else:
        logger.info(f"Constant-speed {G.name}: speed {total / (b - a):.6g}, max/min {ratio:.5f}")
    return result, zeta


def constant_speed_windowed(
    G: Hamiltonian, exceptional_times: Sequence[float], epsilon: float, grid: SpatialGrid
) -> tuple[ReparamHamiltonian, ReparamFn]:
    """
    Constant-speed variant tolerating finitely many zeros of ||G_t|| at exceptional times.

    Around each t_i the time change has slope one on [t_i - delta, t_i + delta];
    elsewhere ||G^zeta_t|| = A with
        A = (int ||G|| - sum_i int_{t_i - delta}^{t_i + delta} ||G||) / (1 - 2 k delta).
    delta is halved until ||G_t|| < int ||G|| inside every window and A < int ||G|| + epsilon / 3.

    Raises:
        ReparamError: No window width satisfies both conditions
    """
    a, b = G.interval
    length = b - a
    centers = sorted(float(t) for t in exceptional_times)
    if not centers:
        return constant_speed(G, grid)
    gaps = np.diff([a] + centers + [b])
    delta = 0.25 * float(np.min(gaps[gaps > 0])) if np.any(gaps > 0) else 0.25 * length
    dense = time_knots(G.interval, 4 * settings.SPEED_TABLE_KNOTS + 1)
    dense_speeds = metrics.slice_norms(G, grid, dense)
    total = float(np.trapezoid(dense_speeds, dense))
    for _ in range(30):
        windows = [(max(a, t - delta), min(b, t + delta)) for t in centers]
        in_window = np.zeros_like(dense, dtype=bool)
        for lo, hi in windows:
            in_window |= (dense >= lo) & (dense <= hi)
        covered = sum(hi - lo for lo, hi in windows)
        inside = float(np.trapezoid(np.where(in_window, dense_speeds, 0.0), dense))
        speed = (total - inside) / (length - covered) * length
        window_peak = float(np.max(dense_speeds[in_window])) if np.any(in_window) else 0.0
        outside = dense_speeds[~in_window]
        if window_peak < total and speed < total + epsilon / 3.0 and np.all(outside > settings.ZERO_NORM_TOLERANCE):
            break
        delta *= 0.5
    else:
        raise ReparamError(f"no window width works for {G.name} around {centers}")
    # eta' = 1 in windows and ||G_t|| / A elsewhere (A per unit length)
    rate = np.where(in_window, 1.0, dense_speeds * length / speed)
    eta = a + cumulative_simpson(rate, x=dense, initial=0.0)
    eta = a + (eta - a) * length / (eta[-1] - a)
    zeta = _invert_eta(dense, eta, "constspeed_windowed", {"speed": speed / length, "delta": delta})
    logger.info(f"Windowed constant-speed {G.name}: delta={delta:.3e}, A={speed / length:.6g}")
    return ReparamHamiltonian(G, zeta), zeta


# ==========================================
# Concatenation
# ==========================================


class ConcatenatedHamiltonian(CompositeHamiltonian):
    """Pieces on consecutive intervals glued in time."""

    def __init__(self, pieces: Sequence[ContactDynamicalSystem], name: Optional[str] = None):
        chart = pieces[0].chart
        interval = (pieces[0].interval[0], pieces[-1].interval[1])
        super().__init__(
            chart, interval, name or " * ".join(p.name for p in pieces), [p.hamiltonian for p in pieces]
        )
        self.pieces = list(pieces)

    def _piece(self, t: float) -> Hamiltonian:
        for piece in self.pieces:
            if t <= piece.interval[1]:
                return piece.hamiltonian
        return self.pieces[-1].hamiltonian

    def _evaluate(self, t, points):
        H = self._piece(t)
        return H._evaluate(H.check_time(t), points)

    def _gradient(self, t, points):
        H = self._piece(t)
        return H._gradient(H.check_time(t), points)

    @property
    def breakpoints(self):
        times = set()
        for piece in self.pieces:
            times |= set(piece.hamiltonian.breakpoints)
        return tuple(sorted(times))

    @property
    def flat_margin(self):
        first, last = self.pieces[0].hamiltonian.flat_margin, self.pieces[-1].hamiltonian.flat_margin
        if first is None or last is None:
            return None
        return min(first, last)


def _probe_points(chart, count: int = 8) -> np.ndarray:
    return sample_points(chart, count, seed=0, box=inner_box(chart))


def _require_chained(pieces: Sequence[ContactDynamicalSystem]) -> None:
    probes = _probe_points(pieces[0].chart)
    for left, right in zip(pieces[:-1], pieces[1:]):
        end = left.flow(left.interval[1], probes)
        start = right.flow(right.interval[0], probes)
        gap = float(np.max(left.chart.point_distance(end, start)))
        if gap > settings.CROSS_CHECK_TOLERANCE:
            raise ReparamError(f"{right.name} does not start where {left.name} ends (gap {gap:.3e})")


def concatenate(
    pieces: Sequence[ContactDynamicalSystem], name: Optional[str] = None, chained: bool = False
) -> ContactDynamicalSystem:
    """
    Glue systems on consecutive intervals into one system.

    By default the pieces are identity based and the end map is the composition
    of their end maps. With `chained` the pieces already run end to start
    (piece k based at the end map of piece k-1) and are used as they are; the
    first piece must then start at the identity.

    Raises:
        ReparamError: Empty input, a piece with the wrong base, or chained pieces that do not meet
    """
    if not pieces:
        raise ReparamError("nothing to concatenate")
    if not pieces[0].flow.is_identity_based:
        raise ReparamError(f"{pieces[0].name} is not based at the identity")
    if chained:
        _require_chained(pieces)
    else:
        for piece in pieces[1:]:
            if not piece.flow.is_identity_based:
                raise ReparamError(f"{piece.name} is not based at the identity")
    H = ConcatenatedHamiltonian(pieces, name)
    joined = PiecewiseFlow if chained else ConcatenatedFlow
    flow = joined([p.flow for p in pieces], H, f"Phi[{H.name}]")
    H.known_flow = flow
    return ContactDynamicalSystem(H, flow, Provenance.ALGEBRAIC, H.name)


def is_loop(zeta: ReparamFn) -> bool:
    return zeta.is_loop


# ==========================================
# Estimates
# ==========================================


class ZetaEstimate(NamedTuple):
    osc_measured: float
    osc_bound: float
    mean_measured: float
    mean_bound: float
    integrated_measured: float
    integrated_bound: float


def zeta_estimate(
    H: Hamiltonian,
    zeta1: ReparamFn,
    zeta2: ReparamFn,
    t: float,
    grid: SpatialGrid,
    knots: Optional[Sequence[float]] = None,
) -> ZetaEstimate:
    """
    Measured left sides and certified right sides of the three
    reparameterization estimates, with L the measured Lipschitz constant in time:
        osc(H^{z1}_t - H^{z2}_t)   <= 2 L |z1'| |z1 - z2| + |z1' - z2'| osc(H_{z2(t)})
        |c(H^{z1}_t - H^{z2}_t)|   <= L |z1'| |z1 - z2| + |z1' - z2'| |c(H_{z2(t)})|
        ||H^{z1} - H^{z2}||_(1,inf) <= 3 L max|z1 - z2| + ||H||_inf int |z1' - z2'|
    """
    knots = time_knots(H.interval, settings.TIME_KNOTS) if knots is None else np.asarray(knots)
    lipschitz = metrics.lipschitz_in_time(H, grid, knots)
    first, second = ReparamHamiltonian(H, zeta1), ReparamHamiltonian(H, zeta2)
    gap = difference(first, second)
    values = gap.value(t, grid.points)
    z1, z2 = float(zeta1.value(t)), float(zeta2.value(t))
    d1, d2 = float(zeta1.derivative(t)), float(zeta2.derivative(t))
    reference = H.value(z2, grid.points)
    osc_bound = 2 * lipschitz * abs(d1) * abs(z1 - z2) + abs(d1 - d2) * metrics.oscillation(reference)
    mean_bound = lipschitz * abs(d1) * abs(z1 - z2) + abs(d1 - d2) * abs(metrics.volume_mean(reference, grid))

    t_fine = np.linspace(*zeta1.interval, 4001)
    drift = float(np.max(np.abs(zeta1.value(t_fine) - zeta2.value(t_fine))))
    slack = float(np.trapezoid(np.abs(zeta1.derivative(t_fine) - zeta2.derivative(t_fine)), t_fine))
    sup = metrics.ham_norm(H, "Linf", grid, knots=knots).value
    fine = segment_knots(zeta1.interval, tuple(zeta1.breakpoints) + tuple(zeta2.breakpoints))
    return ZetaEstimate(
        osc_measured=metrics.oscillation(values),
        osc_bound=osc_bound,
        mean_measured=abs(metrics.volume_mean(values, grid)),
        mean_bound=mean_bound,
        integrated_measured=metrics.ham_norm(gap, "L1inf", grid, knots=fine).value,
        integrated_bound=3 * lipschitz * drift + sup * slack,
    )
