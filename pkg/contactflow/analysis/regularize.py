"""
Regularization of isotopies by small loops.

A Hamiltonian isotopy is regular when ||H_t|| never vanishes. Given H on
[0, 1], we look for a small loop F (an isotopy whose time-one map is the
identity) such that the difference H - F is regular; the loop is taken from
the 2k-parameter variation of the constant loop localized at a point p:
    G^j_t     = chi(x - p) (-cos(2 pi t) (x_j - p_j) - sin(2 pi t) (y_j - q_j)),
    G^{k+j}_t = chi(x - p) ( sin(2 pi t) (x_j - p_j) - cos(2 pi t) (y_j - q_j)),
and the loop with parameter eps is t -> time-one map of
    A_t = sum_j eps_j int_0^t G^j_s ds.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from contactflow.analysis import metrics
from contactflow.analysis.grids import SpatialGrid, time_knots
from contactflow.core.config import settings
from contactflow.core.errors import ChartError, RegularizationError
from contactflow.core.logging import get_logger
from contactflow.dynamics import differences
from contactflow.dynamics.builtins import TimeProfileHamiltonian, ball_support
from contactflow.dynamics.cds import ContactDynamicalSystem, group_difference
from contactflow.dynamics.charts import ContactChart
from contactflow.dynamics.hamfield import Hamiltonian, difference
from contactflow.dynamics.profiles import TWO_PI, TimeProfile, cutoff, cutoff_derivative

logger = get_logger(__name__)


# ==========================================
# Loop variations
# ==========================================


def _blocks(first: np.ndarray, second: np.ndarray, k: int) -> np.ndarray:
    """k copies of each along a new last axis: shape (..., 2k)."""
    return np.concatenate([np.repeat(first[..., None], k, axis=-1), np.repeat(second[..., None], k, axis=-1)], axis=-1)


def _phases(t: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients (a_j(t), b_j(t)) of (x_j - p_j, y_j - q_j) in G^j_t, j = 0 .. 2k - 1."""
    c, s = np.cos(TWO_PI * t), np.sin(TWO_PI * t)
    return _blocks(-c, s, k), _blocks(-s, -c, k)


def _integrated_phases(t: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Time integrals over [0, t] of the coefficients of `_phases`."""
    sin_int = np.sin(TWO_PI * t) / TWO_PI
    cos_int = (1.0 - np.cos(TWO_PI * t)) / TWO_PI
    return _blocks(-sin_int, cos_int, k), _blocks(-cos_int, -sin_int, k)


@dataclass(frozen=True, eq=False)
class LoopVariation:
    """
    The 2k-parameter variation of the constant loop at a base point.

    Attributes:
        chart: Darboux chart
        center: Base point p (Cartesian)
        k: Number of (x_j, y_j) planes used, k <= n
        radius: Cutoff radius; chi = 1 within radius / 2
        gradient_residual: max |dG^j_t(p) + gamma_j(t)| measured by finite differences
    """

    chart: ContactChart
    center: np.ndarray
    k: int
    radius: float
    gradient_residual: float = 0.0

    @property
    def size(self) -> int:
        return 2 * self.k

    def _local(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Offsets in the used planes, the cutoff and its gradient."""
        w = points - self.center
        dist = np.sqrt(np.sum(w**2, axis=1))
        chi = cutoff(dist, 0.5 * self.radius, self.radius)
        safe = np.where(dist > 0, dist, 1.0)
        dchi = (cutoff_derivative(dist, 0.5 * self.radius, self.radius) / safe)[:, None] * w
        wx, wy = w[:, 0 : 2 * self.k : 2], w[:, 1 : 2 * self.k : 2]
        return np.concatenate([wx, wx], axis=1), np.concatenate([wy, wy], axis=1), chi, dchi

    def combination(
        self, coeff_x: np.ndarray, coeff_y: np.ndarray, points: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """
        Values and gradients of chi(x) sum_j (coeff_x[:, j] w_x + coeff_y[:, j] w_y)
        with per-point coefficient rows of length 2k.
        """
        wx, wy, chi, dchi = self._local(points)
        linear = np.sum(coeff_x * wx + coeff_y * wy, axis=1)
        grad = dchi * linear[:, None]
        for j in range(self.size):
            plane = j % self.k
            grad[:, 2 * plane] += chi * coeff_x[:, j]
            grad[:, 2 * plane + 1] += chi * coeff_y[:, j]
        return chi * linear, grad

    def generators(self) -> list["LoopGenerator"]:
        return [LoopGenerator(self, j) for j in range(self.size)]


class LoopGenerator(Hamiltonian):
    """One of the time-periodic, zero-mean functions G^j of a loop variation."""

    def __init__(self, variation: LoopVariation, index: int):
        support = ball_support(variation.chart, variation.center, variation.radius)
        super().__init__(variation.chart, (0.0, 1.0), support, f"G^{index + 1}")
        self.variation = variation
        self.index = index

    def _coefficients(self, t: float, count: int) -> tuple[np.ndarray, np.ndarray]:
        a, b = _phases(np.asarray(t, dtype=float), self.variation.k)
        mask = np.zeros(self.variation.size)
        mask[self.index] = 1.0
        return np.tile(a * mask, (count, 1)), np.tile(b * mask, (count, 1))

    def _evaluate(self, t, points):
        return self.variation.combination(*self._coefficients(t, len(points)), points)[0]

    def _gradient(self, t, points):
        return self.variation.combination(*self._coefficients(t, len(points)), points)[1]


def build_variation(chart: ContactChart, center: Sequence[float], k: int, radius: float) -> LoopVariation:
    """
    Localized loop variation at p, verified against dG^j_t(p) = -gamma_j(t).

    Raises:
        ChartError: T^3 chart, k out of range, or the cutoff ball leaves the domain
    """
    if chart.is_torus:
        raise ChartError("loop variations are built on Darboux charts")
    if not 1 <= k <= chart.n:
        raise ChartError(f"k must lie in [1, {chart.n}], got {k}")
    center = np.asarray(center, dtype=float)
    if center.shape != (chart.dim,):
        raise ChartError(f"base point needs {chart.dim} coordinates")
    ball_support(chart, center, radius)
    variation = LoopVariation(chart, center, k, float(radius))

    worst = 0.0
    for t in np.linspace(0.0, 1.0, 9):
        a, b = _phases(np.asarray(t), k)
        for G in variation.generators():
            measured = differences.gradient(lambda p: G._evaluate(t, p), center[None, :])[0]
            expected = np.zeros(chart.dim)
            plane = G.index % k
            expected[2 * plane], expected[2 * plane + 1] = a[G.index], b[G.index]
            worst = max(worst, float(np.max(np.abs(measured - expected))))
    logger.info(f"Loop variation at {np.round(center, 4).tolist()}: k={k}, dG(p) residual {worst:.2e}")
    return LoopVariation(chart, center, k, float(radius), worst)


# ==========================================
# Loop Hamiltonians
# ==========================================


class LoopHamiltonian(Hamiltonian):
    """
    Hamiltonian of the loop t -> psi_t, psi_t the time-one map of A_t.

    psi_t comes from LOOP_SUBSTEPS classical RK4 steps of the autonomous field
    of A_t (psi_t^{-1} likewise from -A_t), and
        F(t, x) = alpha_x(d/ds psi_s(y)) at s = t, y = psi_t^{-1}(x),
    with the s-derivative by fourth-order centred differences.
    """

    kind = "loop"

    def __init__(self, variation: LoopVariation, eps: Sequence[float], name: Optional[str] = None):
        eps = np.asarray(eps, dtype=float)
        if eps.shape != (variation.size,):
            raise ValueError(f"loop parameter needs {variation.size} entries")
        support = ball_support(variation.chart, variation.center, variation.radius)
        super().__init__(variation.chart, (0.0, 1.0), support, name or f"F[{np.round(eps, 6).tolist()}]")
        self.variation = variation
        self.eps = eps

    def time_one(self, s: np.ndarray, points: np.ndarray, sign: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        """Time-one map of sign * A_s at each point with its own s; returns (images, conformal factor)."""
        s = np.broadcast_to(np.asarray(s, dtype=float), (len(points),))
        px, py = _integrated_phases(s, self.variation.k)
        coeff_x = sign * px * self.eps
        coeff_y = sign * py * self.eps

        def field(_t, x):
            values, grads = self.variation.combination(coeff_x, coeff_y, x)
            return self.chart.contact_field(x, values, grads)

        dt = 1.0 / settings.LOOP_SUBSTEPS
        x, q = points, np.zeros(len(points))
        for _ in range(settings.LOOP_SUBSTEPS):
            k1, m1 = field(0.0, x)
            k2, m2 = field(0.0, x + 0.5 * dt * k1)
            k3, m3 = field(0.0, x + 0.5 * dt * k2)
            k4, m4 = field(0.0, x + dt * k3)
            x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            q = q + dt / 6.0 * (m1 + 2 * m2 + 2 * m3 + m4)
        return x, q

    def _evaluate(self, t, points):
        if not np.any(self.eps):
            return np.zeros(len(points))
        y, _ = self.time_one(t, points, -1.0)
        n = len(points)
        tiled = np.tile(y, (4, 1))

        def loop_at(shifted):
            return self.time_one(shifted, tiled)[0]

        velocity = differences.time_derivative(loop_at, np.full(n, float(t)))
        return np.einsum("nd,nd->n", self.chart.alpha(points), velocity)

    def closed_form_flow(self):
        def forward(t, points):
            return self.time_one(t, points, 1.0)

        def inverse(t, points):
            return self.time_one(t, points, -1.0)

        return forward, inverse


# ==========================================
# Regularization
# ==========================================


class Regularization(NamedTuple):
    loop: LoopHamiltonian
    eps: np.ndarray
    margin: float
    fine_margin: float
    loop_norm: float
    loop_system: ContactDynamicalSystem
    difference_system: ContactDynamicalSystem
    loop_c0: float
    loop_c1: float


def regularity_margin(H: Hamiltonian, grid: SpatialGrid, knots: Sequence[float]) -> float:
    """min_t ||H_t|| over the knots."""
    return float(np.min(metrics.slice_norms(H, grid, knots)))


def _lattice(eps_box: float, size: int) -> list[np.ndarray]:
    """Lattice points of [-box, box]^size ordered by distance from the origin."""
    axis = np.linspace(-eps_box, eps_box, settings.LATTICE_POINTS_PER_AXIS)
    points = [np.array(p) for p in itertools.product(axis, repeat=size)]
    return sorted(points, key=lambda p: (float(np.sum(p**2)), tuple(p)))


def regularize_isotopy(
    H: Hamiltonian,
    variation: LoopVariation,
    eps_box: float,
    grid: SpatialGrid,
    knots: int = 100,
    smallness: Optional[float] = None,
    min_margin: float = 1e-8,
) -> Regularization:
    """
    Find eps in the search box for which H - F_eps is regular.

    The box is swept on a fixed lattice in order of increasing |eps|; the first
    candidate with positive margin (and ||F||_(1,inf) <= smallness when given)
    is re-verified on a MARGIN_REFINEMENT times finer time grid.

    Raises:
        RegularizationError: No lattice point qualifies
    """
    if not H.chart.same_as(variation.chart):
        raise ChartError("Hamiltonian and loop variation live on different charts")
    search = time_knots(H.interval, knots)
    fine = time_knots(H.interval, settings.MARGIN_REFINEMENT * (knots - 1) + 1)
    best: tuple[float, Optional[np.ndarray]] = (-np.inf, None)
    for eps in _lattice(eps_box, variation.size):
        F = LoopHamiltonian(variation, eps)
        margin = regularity_margin(difference(H, F), grid, search)
        if margin > best[0]:
            best = (margin, eps)
        if margin <= min_margin:
            continue
        loop_norm = metrics.ham_norm(F, "L1inf", grid, knots=search).value
        if smallness is not None and loop_norm > smallness:
            continue
        fine_margin = regularity_margin(difference(H, F), grid, fine)
        if fine_margin <= min_margin:
            logger.warning(f"Candidate {np.round(eps, 6).tolist()} loses regularity on the fine grid")
            continue
        loop_system = ContactDynamicalSystem.generate(F)
        base = ContactDynamicalSystem.generate(H)
        c0 = max(float(np.max(np.abs(F.value(t, grid.points)))) for t in search[::10])
        c1 = max(float(np.max(np.abs(F.gradient(t, grid.points)))) for t in search[::10])
        logger.info(
            f"Regularized {H.name} with eps={np.round(eps, 6).tolist()}: margin {margin:.3e} "
            f"(fine {fine_margin:.3e}), ||F||={loop_norm:.3e}"
        )
        return Regularization(
            loop=F,
            eps=eps,
            margin=margin,
            fine_margin=fine_margin,
            loop_norm=loop_norm,
            loop_system=loop_system,
            difference_system=group_difference(loop_system, base),
            loop_c0=c0,
            loop_c1=c1,
        )
    logger.error(f"No regular candidate for {H.name}; best margin {best[0]:.3e}")
    raise RegularizationError(None if best[1] is None else best[1].tolist(), float(best[0]))


class BasicRegularization(NamedTuple):
    profile: TimeProfile
    hamiltonian: TimeProfileHamiltonian
    zeros: list[float]
    forbidden_distance: float


def _zeros(g: np.ndarray, t: np.ndarray, fn) -> Optional[list[float]]:
    """Isolated zeros of sampled g, refined by brentq; None when g vanishes on a run of knots."""
    scale = max(1.0, float(np.max(np.abs(g))))
    tiny = np.abs(g) <= 1e-12 * scale
    if np.any(tiny[:-1] & tiny[1:]):
        return None
    roots = [float(t[i]) for i in np.flatnonzero(tiny)]
    for i in np.flatnonzero((g[:-1] * g[1:] < 0) & ~tiny[:-1] & ~tiny[1:]):
        roots.append(brentq(fn, t[i], t[i + 1], xtol=1e-14))
    return sorted(roots)


def regularize_basic(
    H: Hamiltonian,
    point: Sequence[float],
    forbidden: Sequence[float] = (),
    amplitude: float = 0.3,
    samples: int = 2001,
) -> BasicRegularization:
    """
    A basic loop F(t, x) = f(t) with zero mean such that t -> H(t, p) - f(t)
    has finitely many zeros, none of them in the forbidden set.
    Candidates are single harmonics a cos(2 pi m t), a sin(2 pi m t) with
    shrinking amplitudes.
    """
    p = np.asarray(point, dtype=float)[None, :]
    t = time_knots(H.interval, samples)
    h = np.array([float(H.value(s, p)[0]) for s in t])
    forbidden = np.asarray(forbidden, dtype=float)
    for scale in (1.0, 0.5, 0.25, 0.125):
        for m in (1, 2, 3):
            for use_cos in (True, False):
                coeffs = tuple([0.0] * (m - 1) + [amplitude * scale])
                profile = (
                    TimeProfile(offset=0.0, cos_coeffs=coeffs) if use_cos else TimeProfile(offset=0.0, sin_coeffs=coeffs)
                )

                def g_at(s, profile=profile):
                    return float(H.value(s, p)[0]) - float(profile.value(s))

                roots = _zeros(h - profile.value(t), t, g_at)
                if roots is None:
                    continue
                gap = float(np.min(np.abs(np.subtract.outer(roots, forbidden)))) if roots and forbidden.size else np.inf
                if gap <= 1e-9:
                    continue
                F = TimeProfileHamiltonian(H.chart, profile, H.interval, "f(t)")
                logger.info(f"Basic regularization of {H.name}: {len(roots)} zero(s), distance to forbidden {gap:.3e}")
                return BasicRegularization(profile, F, roots, gap)
    raise RegularizationError(None, 0.0)


def basic_obstruction_minors(
    G1: Hamiltonian, G2: Hamiltonian, point: Sequence[float], times: Sequence[float]
) -> float:
    """max over times of the largest |2x2 minor| of the 2 x dim matrix (dG1_t(p); dG2_t(p))."""
    p = np.asarray(point, dtype=float)[None, :]
    worst = 0.0
    for t in times:
        rows = np.vstack([G1.gradient(t, p)[0], G2.gradient(t, p)[0]])
        for i, j in itertools.combinations(range(rows.shape[1]), 2):
            worst = max(worst, abs(rows[0, i] * rows[1, j] - rows[0, j] * rows[1, i]))
    return worst
