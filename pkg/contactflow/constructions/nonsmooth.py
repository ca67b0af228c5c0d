"""
Non-smooth gallery: contact homeomorphisms that fail to be Lipschitz.

The autonomous Hamiltonian H = eta(z) I(r), with I(r) the integral of s rho(s)
over [r, 1] and rho(r) = r^(-a) near the axis, has a continuous field that is
not smooth on the axis. The truncations H_j use rho_j = rho * cap(r / eps_j)
and are smooth. On the slab U = {|z| <= u} every one of these flows is explicit:

    (r, theta_i, z) -> (r, theta_i - t rho(r), z + t (r^2 rho(r) / 2 + I(r)))

and the inverse replaces rho by -rho. Points are Cartesian rows; r is the
radius of all planar coordinates together.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property, lru_cache
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson, solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from contactflow.analysis.grids import SpatialGrid, sample_points
from contactflow.core.config import settings
from contactflow.core.errors import (
    CertificateRangeError,
    ChartError,
    DomainError,
    GalleryError,
    GridCoverageError,
    SupportLeakError,
    TimeRangeError,
)
from contactflow.core.logging import get_logger
from contactflow.dynamics.builtins import RotationHamiltonian
from contactflow.dynamics.cds import Automorphism, ContactDynamicalSystem
from contactflow.dynamics.charts import ChartKind, ContactChart, make_chart
from contactflow.dynamics.flow import FlowMap, flow_of
from contactflow.dynamics.hamfield import Hamiltonian
from contactflow.dynamics.profiles import TWO_PI, cutoff, cutoff_derivative, smooth_step, smooth_step_derivative
from contactflow.schemas.nonsmooth import (
    AxisReport,
    CertificateRow,
    ConjugacyReport,
    HomeomorphismReport,
    LipschitzCertificate,
    TruncationDiagnostics,
    TruncationIndex,
    TruncationPair,
)

logger = get_logger(__name__)

# rows whose quotient carries a larger relative rounding error are not certified
CERTIFIED_RELATIVE_ERROR = 1e-6


def _radius(points: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.asarray(points)[..., :-1] ** 2, axis=-1))


# ==========================================
# Profiles
# ==========================================


@dataclass(frozen=True, eq=False)
class RhoProfile:
    """
    rho(r) = r^(-a) on (0, splice], tapered smoothly to 0 on [splice, outer].

    The truncation radii are eps_j = first_radius * ratio^(j - 1), j >= 1, and
    rho_j = rho * S(2 r / eps_j - 1) with S the smooth step, so rho_j = rho for
    r >= eps_j, rho_j = 0 for r <= eps_j / 2 and 0 <= rho_j <= rho_k <= rho for k >= j.
    """

    exponent: float = 1.0
    splice: float = 0.5
    outer: float = 0.9
    first_radius: float = 0.25
    ratio: float = 0.5
    table_points: Optional[int] = None

    def __post_init__(self):
        if not 0.0 < self.exponent < 2.0:
            raise GalleryError(f"exponent must lie in (0, 2), got {self.exponent}")
        if not 0.0 < self.splice < self.outer < 1.0:
            raise GalleryError(f"need 0 < splice < outer < 1, got {self.splice}, {self.outer}")
        if not 0.0 < self.first_radius <= self.splice:
            raise GalleryError(f"truncation radii must start inside (0, splice], got {self.first_radius}")
        if not 0.0 < self.ratio < 1.0:
            raise GalleryError(f"truncation ratio must lie in (0, 1), got {self.ratio}")

    def radius(self, j: int) -> float:
        """eps_j."""
        if j < 1:
            raise GalleryError(f"truncation indices start at 1, got {j}")
        return self.first_radius * self.ratio ** (j - 1)

    def _weight(self, r: np.ndarray, j: Optional[int]) -> np.ndarray:
        weight = 1.0 - smooth_step((r - self.splice) / (self.outer - self.splice))
        if j is not None:
            weight = weight * smooth_step(2.0 * r / self.radius(j) - 1.0)
        return weight

    def rho(self, r: np.ndarray, j: Optional[int] = None) -> np.ndarray:
        """rho_j(r); the limit profile is +inf on the axis."""
        r = np.asarray(r, dtype=float)
        weight = self._weight(r, j)
        power = np.where(r > 0, np.where(r > 0, r, 1.0) ** -self.exponent, np.inf)
        with np.errstate(invalid="ignore"):
            return np.where(weight > 0, power * weight, 0.0)

    def radial_moment(self, r: np.ndarray, j: Optional[int] = None) -> np.ndarray:
        """r^2 rho_j(r) / 2, continuous on the axis."""
        r = np.asarray(r, dtype=float)
        return 0.5 * r ** (2.0 - self.exponent) * self._weight(r, j)

    @cached_property
    def _taper_table(self) -> CubicHermiteSpline:
        # integral of s rho over [r, outer] for r in [splice, outer]
        points = self.table_points or settings.PROFILE_TABLE_POINTS
        s = np.linspace(self.splice, self.outer, points)
        f = s ** (1.0 - self.exponent) * self._weight(s, None)
        cumulative = cumulative_simpson(f, x=s, initial=0.0)
        return CubicHermiteSpline(s, cumulative[-1] - cumulative, -f)

    @cached_property
    def _cap_table(self) -> CubicHermiteSpline:
        # integral of v^(1-a) S(2 v - 1) over [v, 1] for v in [1/2, 1]
        points = self.table_points or settings.PROFILE_TABLE_POINTS
        v = np.linspace(0.5, 1.0, points)
        f = v ** (1.0 - self.exponent) * smooth_step(2.0 * v - 1.0)
        cumulative = cumulative_simpson(f, x=v, initial=0.0)
        return CubicHermiteSpline(v, cumulative[-1] - cumulative, -f)

    def integral(self, r: np.ndarray, j: Optional[int] = None) -> np.ndarray:
        """
        I_j(r) = integral of s rho_j(s) over [r, 1]: closed form on the power
        segment, a Hermite table on the taper and on the cap.
        """
        r = np.asarray(r, dtype=float)
        a = self.exponent
        core = (self.splice ** (2.0 - a) - np.minimum(r, self.splice) ** (2.0 - a)) / (2.0 - a)
        out = core + self._taper_table(np.clip(r, self.splice, self.outer))
        if j is None:
            return out
        eps = self.radius(j)
        scaled = np.clip(r / eps, 0.5, 1.0)
        capped = float(self.integral(eps)) + eps ** (2.0 - a) * self._cap_table(scaled)
        return np.where(r < eps, capped, out)

    def mass_below(self, eps: float) -> float:
        """Integral of s rho(s) over (0, eps] for eps <= splice."""
        if eps > self.splice:
            raise GalleryError(f"radius {eps} lies outside the power segment")
        return eps ** (2.0 - self.exponent) / (2.0 - self.exponent)

    def shift(self, r: np.ndarray, j: Optional[int] = None) -> np.ndarray:
        """The z-speed r^2 rho_j / 2 + I_j on the slab."""
        return self.radial_moment(r, j) + self.integral(r, j)


@dataclass(frozen=True)
class CutoffEta:
    """eta(z) = 1 for |z| <= plateau, 0 for |z| >= plateau + width, smooth and even."""

    plateau: float = 1.0
    width: float = 1.0

    def __post_init__(self):
        if self.plateau <= 0 or self.width <= 0:
            raise GalleryError(f"cutoff needs a positive plateau and width, got {self.plateau}, {self.width}")

    @property
    def outer(self) -> float:
        return self.plateau + self.width

    def value(self, z: np.ndarray) -> np.ndarray:
        return cutoff(z, self.plateau, self.outer)

    def derivative(self, z: np.ndarray) -> np.ndarray:
        return cutoff_derivative(z, self.plateau, self.outer)

    @cached_property
    def slope_bound(self) -> float:
        """sup |eta'|."""
        u = np.linspace(0.0, 1.0, settings.PROFILE_TABLE_POINTS)
        return float(np.max(np.abs(smooth_step_derivative(u)))) / self.width


@lru_cache(maxsize=64)
def invariance_radius(profile: RhoProfile, eta: CutoffEta, j: Optional[int] = None, samples: int = 513) -> float:
    """
    The largest u with eta(z +- (r^2 rho_j / 2 + I_j(r))) = 1 for |z| <= u and
    all sampled r, by bisection.

    Raises:
        SupportLeakError: The plateau of eta is too narrow for any u > 0
    """
    r = np.concatenate([[0.0], np.geomspace(settings.RADIUS_FLOOR, 1.0, samples)])
    reach = profile.shift(r, j)[None, :]

    def holds(u: float) -> bool:
        z = np.linspace(-u, u, 65)[:, None]
        return bool(np.all(eta.value(z + reach) == 1.0) and np.all(eta.value(z - reach) == 1.0))

    if not holds(0.0):
        raise SupportLeakError(f"cutoff plateau {eta.plateau} is narrower than the profile reach {float(np.max(reach)):.6g}")
    lo, hi = 0.0, eta.plateau
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if holds(mid):
            lo = mid
        else:
            hi = mid
    if lo <= 0.0:
        raise SupportLeakError("the invariant slab is empty")
    return lo


def growth_constant(profile: RhoProfile, eta: CutoffEta) -> float:
    """b = |eta'| / 2 * integral of s rho over (0, 1]; radii stay within e^(+-b) r."""
    return 0.5 * eta.slope_bound * float(profile.integral(0.0))


# ==========================================
# Hamiltonians
# ==========================================


def gallery_support(n: int, profile: RhoProfile, eta: CutoffEta) -> np.ndarray:
    return np.asarray([(0.0, profile.outer), (0.0, TWO_PI)] * n + [(-eta.outer, eta.outer)])


def slab_box(n: int, profile: RhoProfile, u: float) -> np.ndarray:
    return np.asarray([(0.0, profile.outer), (0.0, TWO_PI)] * n + [(-u, u)])


def gallery_chart(profile: RhoProfile, eta: CutoffEta, n: int = 1) -> ContactChart:
    """A Darboux chart holding the support of every H_j with room for the inverse slab map."""
    half = eta.outer + 0.5
    return make_chart(ChartKind.DARBOUX, [(0.0, 1.0), (0.0, TWO_PI)] * n + [(-half, half)], n)


def _require_within(chart: ContactChart, support: np.ndarray, what: str) -> None:
    box = chart.box
    if (
        np.any(support[0:-1:2, 1] > box[0:-1:2, 1])
        or support[-1, 0] < box[-1, 0]
        or support[-1, 1] > box[-1, 1]
    ):
        raise SupportLeakError(f"{what} support {support.tolist()} leaves the chart box")


class RhoHamiltonian(Hamiltonian):
    """
    H_j = eta(z) I_j(r) on an unscaled Darboux chart. j = None is the continuous
    limit, whose gradient grows like r^(1-a) at the axis.
    """

    def __init__(
        self,
        chart: ContactChart,
        profile: RhoProfile,
        eta: CutoffEta,
        j: Optional[int] = None,
        name: Optional[str] = None,
    ):
        if chart.is_torus or chart.form_scale is not None:
            raise ChartError("the rho family lives on unscaled Darboux charts")
        support = gallery_support(chart.n, profile, eta)
        _require_within(chart, support, "rho Hamiltonian")
        super().__init__(chart, (0.0, 1.0), support, name or ("H_rho" if j is None else f"H_{j}"))
        self.profile = profile
        self.eta = eta
        self.j = j

    def _evaluate(self, t, points):
        return self.eta.value(points[:, -1]) * self.profile.integral(_radius(points), self.j)

    def _gradient(self, t, points):
        r, z = _radius(points), points[:, -1]
        rho = self.profile.rho(np.maximum(r, settings.RADIUS_FLOOR), self.j)
        grad = np.empty_like(points)
        grad[:, :-1] = -(self.eta.value(z) * rho)[:, None] * points[:, :-1]
        grad[:, -1] = self.eta.derivative(z) * self.profile.integral(r, self.j)
        return grad

    @property
    def is_autonomous(self):
        return True

    @property
    def is_smooth(self) -> bool:
        return self.j is not None


def split_field(H: RhoHamiltonian, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    The parts Y and Z of X_H = Y - Z in Cartesian components:
    Y = eta' I / 2 sum r_i d/dr_i + eta (r^2 rho / 2 + I) d/dz, Z = eta rho sum d/dtheta_i.
    """
    points = H.chart.require_inside(points)
    r, z = _radius(points), points[:, -1]
    eta, slope = H.eta.value(z), H.eta.derivative(z)
    I = H.profile.integral(r, H.j)
    spin = eta * H.profile.rho(np.maximum(r, settings.RADIUS_FLOOR), H.j)

    Y = np.zeros_like(points)
    Y[:, :-1] = (0.5 * slope * I)[:, None] * points[:, :-1]
    Y[:, -1] = eta * (H.profile.radial_moment(r, H.j) + I)

    Z = np.zeros_like(points)
    Z[:, 0:-1:2] = -spin[:, None] * points[:, 1:-1:2]
    Z[:, 1:-1:2] = spin[:, None] * points[:, 0:-1:2]
    return Y, Z


# ==========================================
# Explicit flows
# ==========================================


def _slab_map(profile: RhoProfile, points: np.ndarray, t: float, j: Optional[int] = None) -> np.ndarray:
    """The slab formula at signed time t; negative t is the rho -> -rho inverse."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    r = _radius(points)
    on_axis = r <= 0.0
    rho = np.where(on_axis, 0.0, profile.rho(np.where(on_axis, 1.0, r), j))
    angle = -t * rho
    c, s = np.cos(angle)[:, None], np.sin(angle)[:, None]
    x, y = points[:, 0:-1:2], points[:, 1:-1:2]
    out = points.copy()
    out[:, 0:-1:2] = c * x - s * y
    out[:, 1:-1:2] = s * x + c * y
    out[:, -1] += t * profile.shift(r, j)
    return out


def closed_form_flow(
    profile: RhoProfile,
    eta: CutoffEta,
    t: float,
    points: np.ndarray,
    j: Optional[int] = None,
    inverse: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """
    (phi_t(x), h_t(x)) on the slab U_j, or the inverse map with inverse=True.
    The radius is untouched and the conformal factor vanishes.

    Raises:
        TimeRangeError: t outside [0, 1]
        DomainError: A point lies outside the slab; integrate the flow there
    """
    if not 0.0 <= t <= 1.0:
        raise TimeRangeError(f"slab flow is defined for t in [0, 1], got {t}")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    u = invariance_radius(profile, eta, j)
    outside = np.abs(points[:, -1]) > u + 1e-12
    if np.any(outside):
        raise DomainError(f"{int(np.sum(outside))} point(s) outside the slab |z| <= {u:.6g}", points[outside])
    return _slab_map(profile, points, -t if inverse else t, j), np.zeros(len(points))


def _axis_flow(eta: CutoffEta, speed: float, z0: float, t: float, sign: float = 1.0) -> tuple[float, float]:
    """z' = eta(z) speed along the axis, with the conformal integrand eta'(z) speed."""
    if t == 0.0 or speed == 0.0:
        return float(z0), 0.0

    def rhs(_, y):
        return [sign * float(eta.value(y[0])) * speed, sign * float(eta.derivative(y[0])) * speed]

    solution = solve_ivp(rhs, (0.0, t), [z0, 0.0], rtol=1e-11, atol=1e-13)
    return float(solution.y[0, -1]), float(solution.y[1, -1])


def limit_homeomorphism(
    profile: RhoProfile,
    eta: CutoffEta,
    chart: ContactChart,
    t: float = 1.0,
    depth: int = 12,
    step: Optional[float] = None,
) -> Automorphism:
    """
    The time-t map of the limit system as a non-smooth automorphism.

    On the slab the map is explicit; off the slab a point of radius
    r >= e^b eps_j follows H_j, whose flow agrees with the limit there, and
    points on the axis follow the one-dimensional flow of eta(z) I(0).

    Raises:
        CertificateRangeError: A point off the slab lies closer to the axis than e^b eps_depth
    """
    u = invariance_radius(profile, eta)
    spread = float(np.exp(growth_constant(profile, eta)))
    speed = float(profile.integral(0.0))
    flows: dict[int, FlowMap] = {}

    def flow(j: int) -> FlowMap:
        if j not in flows:
            flows[j] = flow_of(RhoHamiltonian(chart, profile, eta, j), step)
        return flows[j]

    def move(points: np.ndarray, sign: float) -> tuple[np.ndarray, np.ndarray]:
        out, g = np.empty_like(points), np.zeros(len(points))
        r = _radius(points)
        slab = np.abs(points[:, -1]) <= u
        out[slab] = _slab_map(profile, points[slab], sign * t)

        axis = ~slab & (r == 0.0)
        for k in np.flatnonzero(axis):
            z, g[k] = _axis_flow(eta, speed, points[k, -1], t, sign)
            out[k] = points[k]
            out[k, -1] = z

        rest = ~slab & ~axis
        if np.any(rest):
            nearest = spread * profile.radius(depth)
            if np.min(r[rest]) < nearest:
                raise CertificateRangeError(
                    f"points within {nearest:.3e} of the axis need truncations deeper than {depth}", nearest
                )
            levels = np.ceil(np.log(r[rest] / (spread * profile.first_radius)) / np.log(profile.ratio))
            indices = 1 + np.maximum(levels, 0.0).astype(int)
            rows = np.flatnonzero(rest)
            for j in np.unique(indices):
                chosen = rows[indices == j]
                fl = flow(int(j))
                images, factor = fl.evaluate(t, points[chosen]) if sign > 0 else fl.inverse_evaluate(t, points[chosen])
                out[chosen], g[chosen] = images, factor
        return out, g

    return Automorphism(chart, lambda p: move(p, 1.0), lambda p: move(p, -1.0), f"phi_rho@{t:g}", smooth=False)


# ==========================================
# Diagnostics
# ==========================================


def _require_covering(grid: SpatialGrid, support: np.ndarray) -> None:
    box = grid.box
    if np.any(box[0:-1:2, 1] < support[0:-1:2, 1]) or box[-1, 0] > support[-1, 0] or box[-1, 1] < support[-1, 1]:
        raise GridCoverageError(f"grid box {box.tolist()} misses the support {support.tolist()}")


def truncation_sequence_diagnostics(
    profile: RhoProfile,
    eta: CutoffEta,
    chart: ContactChart,
    indices: Sequence[int],
    grid: SpatialGrid,
    count: int = 64,
    times: Optional[Sequence[float]] = None,
    seed: int = 0,
    step: Optional[float] = None,
    workers: int = 1,
) -> TruncationDiagnostics:
    """
    Convergence table of the truncations: sup |H_j - H_k| beside its bound
    integral of s rho over (0, eps_j], sup |Y_j - Y_k|, flow distances overall
    and on the stabilized region r >= e^b eps_j, radius ratios beside e^(+-b),
    slab radii u_j and conformal factors on trajectories starting in the slab.

    Raises:
        GalleryError: No indices
        GridCoverageError: The grid misses the support
    """
    indices = sorted({int(j) for j in indices})
    if not indices:
        raise GalleryError("truncation diagnostics need at least one index")
    support = gallery_support(chart.n, profile, eta)
    _require_covering(grid, support)
    times = [float(t) for t in (times if times is not None else np.linspace(0.0, 1.0, 5))]

    b = growth_constant(profile, eta)
    spread = float(np.exp(b))
    u = invariance_radius(profile, eta)
    points = sample_points(chart, count, seed, support)
    slab_points = sample_points(chart, count, seed + 1, slab_box(chart.n, profile, u))
    hamiltonians = {j: RhoHamiltonian(chart, profile, eta, j) for j in indices}

    def run(j: int) -> tuple[np.ndarray, np.ndarray]:
        flow = flow_of(hamiltonians[j], step)
        images, _ = flow.trajectory(points, times)
        _, h_slab = flow.trajectory(slab_points, times)
        return images, h_slab

    logger.info(f"Truncation diagnostics: indices {indices}, {count} trajectories, b={b:.4g}, u={u:.4g}")
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        runs = dict(zip(indices, pool.map(run, indices)))

    r0 = _radius(points)
    moving = r0 > settings.RADIUS_FLOOR
    index_rows = []
    for j in indices:
        images, h_slab = runs[j]
        ratio = _radius(images)[:, moving] / r0[moving]
        index_rows.append(
            TruncationIndex(
                j=j,
                epsilon=profile.radius(j),
                invariance_radius=invariance_radius(profile, eta, j),
                radius_ratio_max=float(np.max(ratio)),
                radius_ratio_min=float(np.min(ratio)),
                conformal_on_invariant_slab=float(np.max(np.abs(h_slab))),
            )
        )
    radii = [row.invariance_radius for row in index_rows]
    # U_j contains U_k contains U for k >= j
    monotone = all(b2 <= b1 for b1, b2 in zip(radii[:-1], radii[1:])) and min(radii) >= u

    values = {j: hamiltonians[j].value(0.0, grid.points) for j in indices}
    fields = {j: split_field(hamiltonians[j], grid.points)[0] for j in indices}
    pairs = []
    for j, k in combinations(indices, 2):
        distance = np.sqrt(np.sum((runs[j][0] - runs[k][0]) ** 2, axis=-1))
        stable = r0 >= spread * profile.radius(j)
        pairs.append(
            TruncationPair(
                j=j,
                k=k,
                hamiltonian_gap=float(np.max(np.abs(values[j] - values[k]))),
                hamiltonian_bound=profile.mass_below(profile.radius(j)),
                radial_field_gap=float(np.max(np.linalg.norm(fields[j] - fields[k], axis=1))),
                flow_gap=float(np.max(distance)),
                stabilized_gap=float(np.max(distance[:, stable])) if np.any(stable) else 0.0,
                stabilized_points=int(np.sum(stable)),
            )
        )
    return TruncationDiagnostics(
        growth_constant=b, invariance_radius=u, indices=index_rows, pairs=pairs, radii_monotone=monotone, seed=seed
    )


def axis_flow_check(
    profile: RhoProfile,
    eta: CutoffEta,
    chart: ContactChart,
    j: int,
    count: int = 9,
    step: Optional[float] = None,
) -> AxisReport:
    """
    Integrate H_j from points on the z-axis: they must stay on the axis and move
    by z' = eta(z) I_j(0), which scipy integrates independently; the limit speed I(0)
    is compared too.
    """
    flow = flow_of(RhoHamiltonian(chart, profile, eta, j), step)
    zs = 0.95 * np.linspace(-eta.outer, eta.outer, count)
    points = np.zeros((count, chart.dim))
    points[:, -1] = zs
    images = flow(1.0, points)

    speed, limit_speed = float(profile.integral(0.0, j)), float(profile.integral(0.0))
    reference = np.array([_axis_flow(eta, speed, z, 1.0)[0] for z in zs])
    limit = np.array([_axis_flow(eta, limit_speed, z, 1.0)[0] for z in zs])
    return AxisReport(
        j=j,
        planar_drift=float(np.max(np.abs(images[:, :-1]))),
        ode_gap=float(np.max(np.abs(images[:, -1] - reference))),
        limit_gap=float(np.max(np.abs(images[:, -1] - limit))),
        axis_speed=speed,
        limit_axis_speed=limit_speed,
    )


def homeomorphism_checks(
    profile: RhoProfile,
    eta: CutoffEta,
    chart: ContactChart,
    points: Optional[np.ndarray] = None,
    count: int = 2000,
    seed: int = 0,
    tolerance: Optional[float] = None,
) -> HomeomorphismReport:
    """
    Injectivity of the limit time-one map on slab samples (no two distinct
    inputs land within `tolerance` of each other, by KD-tree) and
    surjectivity through the rho -> -rho inverse onto sampled targets.
    """
    tolerance = settings.MATCH_TOLERANCE if tolerance is None else tolerance
    u = invariance_radius(profile, eta)
    box = slab_box(chart.n, profile, u)
    points = sample_points(chart, count, seed, box) if points is None else chart._rows(points)
    images, _ = closed_form_flow(profile, eta, 1.0, points)

    pairs = cKDTree(images).query_pairs(tolerance, output_type="ndarray")
    if len(pairs):
        apart = np.linalg.norm(points[pairs[:, 0]] - points[pairs[:, 1]], axis=1) > tolerance
        collisions = int(np.sum(apart))
    else:
        collisions = 0

    separation, nearest = cKDTree(points).query(points, k=2)
    moved = np.linalg.norm(images - images[nearest[:, 1]], axis=1)
    ratio = moved / np.maximum(separation[:, 1], np.finfo(float).tiny)

    targets = sample_points(chart, count, seed + 1, box)
    sources, _ = closed_form_flow(profile, eta, 1.0, targets, inverse=True)
    surjectivity = float(np.max(np.abs(_slab_map(profile, sources, 1.0) - targets)))
    round_trip = float(np.max(np.abs(_slab_map(profile, images, -1.0) - points)))
    report = HomeomorphismReport(
        samples=len(points),
        injective=collisions == 0,
        collisions=collisions,
        min_separation_ratio=float(np.min(ratio)),
        surjectivity_residual=surjectivity,
        round_trip_residual=round_trip,
        radius_change=float(np.max(np.abs(_radius(images) - _radius(points)))),
    )
    if collisions:
        logger.warning(f"Limit map collapsed {collisions} sample pair(s) within {tolerance:g}")
    return report


# ==========================================
# Non-Lipschitz certificate
# ==========================================


def _certificate_radii(k: np.ndarray, a: float) -> tuple[np.ndarray, np.ndarray]:
    """s_k with rho(s_k) = 2 pi k and s_k' with rho(s_k') = 2 pi k + pi."""
    return (TWO_PI * k) ** (-1.0 / a), (TWO_PI * k + np.pi) ** (-1.0 / a)


def lipschitz_certificate(
    profile: RhoProfile,
    eta: CutoffEta,
    delta: float,
    ks: Optional[Sequence[int]] = None,
    kmax: Optional[int] = None,
    count: int = 40,
) -> LipschitzCertificate:
    """
    Displacement quotients of the limit time-one map at (s_k, 0, ..., 0) and
    (s_k', 0, ..., 0). The images sit on opposite rays, so each quotient exceeds
    (s_k + s_k') / (s_k - s_k'), which in turn exceeds s_k^(-delta).

    Without explicit ks, count indices are spread geometrically from the first
    radius on the power segment up to kmax (default: the last radius above
    RADIUS_FLOOR).

    Raises:
        GalleryError: delta outside (0, a) or a requested radius off the power segment
        CertificateRangeError: No requested radius is resolvable in floating point
    """
    a = profile.exponent
    if not 0.0 < delta < a:
        raise GalleryError(f"delta must lie in (0, {a}), got {delta}")
    # the sampled points sit at z = 0, inside the slab
    invariance_radius(profile, eta)

    k_first = max(1, int(np.ceil(profile.splice ** (-a) / TWO_PI)))
    k_last = int(np.floor(settings.RADIUS_FLOOR ** (-a) / TWO_PI))
    if ks is None:
        top = k_last if kmax is None else int(kmax)
        if top < k_first:
            raise GalleryError(f"kmax={top} is below the first index on the power segment ({k_first})")
        ks = np.unique(np.round(np.geomspace(k_first, top, count)).astype(np.int64))
    ks = np.asarray(sorted({int(k) for k in ks}), dtype=np.int64)
    if len(ks) == 0 or ks[0] < k_first:
        raise GalleryError(f"indices below {k_first} give radii outside the power segment")

    resolvable = ks <= k_last
    if not np.any(resolvable):
        raise CertificateRangeError(
            f"every requested radius lies below {settings.RADIUS_FLOOR:g}",
            float(_certificate_radii(np.array([k_last], dtype=float), a)[0][0]),
        )

    k = ks[resolvable].astype(float)
    s, s_prime = _certificate_radii(k, a)
    gap = s - s_prime
    chord = (s + s_prime) / gap
    rel_error = np.finfo(float).eps * (4.0 * chord + TWO_PI * k)
    certified = rel_error <= CERTIFIED_RELATIVE_ERROR

    first = np.zeros((len(k), 3))
    second = np.zeros((len(k), 3))
    first[:, 0], second[:, 0] = s, s_prime
    moved = np.linalg.norm(_slab_map(profile, first, 1.0) - _slab_map(profile, second, 1.0), axis=1)
    quotient = moved / gap
    bound = s ** (-delta)

    rows = [
        CertificateRow(
            k=int(k[i]),
            s_k=float(s[i]),
            s_k_prime=float(s_prime[i]),
            quotient=float(quotient[i]),
            bound=float(bound[i]),
            chord_bound=float(chord[i]),
            gap_ok=bool(gap[i] < s[i] ** (1.0 + delta)),
            rel_error=float(rel_error[i]),
            passed=bool(quotient[i] > bound[i]),
        )
        for i in np.flatnonzero(certified)
    ]
    excluded = [int(x) for x in ks[~resolvable]] + [int(x) for x in k[~certified]]
    if excluded:
        logger.warning(f"Certificate excludes {len(excluded)} index(es) below the float floor")
    quotients = [row.quotient for row in rows]
    certificate = LipschitzCertificate(
        exponent=a,
        delta=delta,
        rows=rows,
        excluded=sorted(excluded),
        smallest_usable=min((row.s_k for row in rows), default=None),
        monotone=all(q2 > q1 for q1, q2 in zip(quotients[:-1], quotients[1:])),
    )
    logger.info(
        f"Lipschitz certificate a={a:g} delta={delta:g}: {len(rows)} rows, "
        f"max quotient {max(quotients, default=0.0):.4g}, passed={certificate.passed}"
    )
    return certificate


# ==========================================
# Conjugate fields
# ==========================================


def level_function(r: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """f(r, theta) = 4 / (r^2 (1 + 15 cos^2 theta)) = 1 / (4 x^2 + y^2 / 4)."""
    return 4.0 / (np.asarray(r) ** 2 * (1.0 + 15.0 * np.cos(theta) ** 2))


def ellipse_ratio(levels: Sequence[float] = (4.0, 16.0, 64.0), angles: int = 64) -> float:
    """
    Largest over smallest radius of the level sets {f = c} along rays, by root
    finding; returns the ratio furthest from the exact value 4.
    """
    theta = np.linspace(0.0, np.pi, angles, endpoint=False)
    worst = 4.0
    for c in levels:
        radii = [brentq(lambda r: float(level_function(r, th)) - c, 1e-6, 1e3, xtol=1e-14) for th in theta]
        ratio = max(radii) / min(radii)
        if abs(ratio - 4.0) > abs(worst - 4.0):
            worst = ratio
    return worst


class EllipticSeedHamiltonian(Hamiltonian):
    """
    F = exp(-f(x1, y1)) chi(r) chi(z): exponentially flat at the axis, cut off
    inside the slab |z| <= u.
    """

    def __init__(
        self,
        chart: ContactChart,
        slab: float,
        radii: tuple[float, float] = (0.3, 0.6),
        name: str = "F",
    ):
        if chart.is_torus:
            raise ChartError("the elliptic seed lives on Darboux charts")
        if not 0.0 < radii[0] < radii[1] <= chart.box[0, 1]:
            raise SupportLeakError(f"seed radii {radii} leave the chart")
        self.z_cut = (0.5 * slab, 0.9 * slab)
        self.radii = (float(radii[0]), float(radii[1]))
        support = np.asarray([(0.0, self.radii[1]), (0.0, TWO_PI)] * chart.n + [(-self.z_cut[1], self.z_cut[1])])
        super().__init__(chart, (0.0, 1.0), support, name)

    def _parts(self, points: np.ndarray):
        x, y = points[:, 0], points[:, 1]
        q = 4.0 * x**2 + 0.25 * y**2
        safe = np.where(q > 0, q, 1.0)
        seed = np.where(q > 0, np.exp(-1.0 / safe), 0.0)
        return x, y, safe, seed, _radius(points), points[:, -1]

    def _evaluate(self, t, points):
        _, _, _, seed, r, z = self._parts(points)
        return seed * cutoff(r, *self.radii) * cutoff(z, *self.z_cut)

    def _gradient(self, t, points):
        x, y, safe, seed, r, z = self._parts(points)
        radial, vertical = cutoff(r, *self.radii), cutoff(z, *self.z_cut)
        dseed = seed / safe**2
        grad = np.zeros_like(points)
        grad[:, 0] = dseed * 8.0 * x * radial * vertical
        grad[:, 1] = dseed * 0.5 * y * radial * vertical
        scale = seed * vertical * cutoff_derivative(r, *self.radii) / np.where(r > 0, r, 1.0)
        grad[:, :-1] += scale[:, None] * points[:, :-1]
        grad[:, -1] = seed * radial * cutoff_derivative(z, *self.z_cut)
        return grad

    @property
    def is_autonomous(self):
        return True


class PulledBackSeedHamiltonian(Hamiltonian):
    """H = F o phi with phi the limit time-one map; smooth because F is flat at the axis."""

    def __init__(self, seed: EllipticSeedHamiltonian, profile: RhoProfile, name: str = "H"):
        super().__init__(seed.chart, seed.interval, None, name)
        self.seed = seed
        self.profile = profile

    def _evaluate(self, t, points):
        return self.seed._evaluate(t, _slab_map(self.profile, points, 1.0))

    @property
    def is_autonomous(self):
        return True


def conjugate_fields_example(
    profile: RhoProfile,
    eta: CutoffEta,
    chart: ContactChart,
    count: int = settings.SAMPLE_POINTS,
    times: int = 10,
    seed: int = 0,
    step: Optional[float] = None,
    radii: tuple[float, float] = (0.3, 0.6),
) -> tuple[PulledBackSeedHamiltonian, EllipticSeedHamiltonian, ConjugacyReport]:
    """
    Build F and H = F o phi and compare phi_H^t with phi^-1 o phi_F^t o phi on
    sampled trajectories, both sides integrated.

    Seeds are drawn as slab points q and pulled back to p = phi^-1(q), so phi(p) is exact.

    Raises:
        SupportLeakError: F's support or the pulled back seeds leave the chart
    """
    u = invariance_radius(profile, eta)
    F = EllipticSeedHamiltonian(chart, u, radii)
    H = PulledBackSeedHamiltonian(F, profile)

    box = slab_box(chart.n, profile, u)
    box[0:-1:2, 1] = radii[1]
    targets = sample_points(chart, count, seed, box)
    sources, _ = closed_form_flow(profile, eta, 1.0, targets, inverse=True)
    if not np.all(chart.contains(sources, settings.DOMAIN_MARGIN)):
        raise SupportLeakError("pulled back seeds leave the chart; enlarge its z range")

    definitional = float(np.max(np.abs(H.value(0.0, sources) - F.value(0.0, _slab_map(profile, sources, 1.0)))))
    ts = list(np.linspace(0.0, 1.0, times + 1)[1:])
    logger.info(f"Conjugacy check: {count} seeds x {times} times")
    left, _ = flow_of(H, step).trajectory(sources, ts)
    right_q, _ = flow_of(F, step).trajectory(targets, ts)
    right = np.stack([_slab_map(profile, right_q[k], -1.0) for k in range(len(ts))])
    residual = float(np.max(np.sqrt(np.sum((left - right) ** 2, axis=-1))))

    near = np.zeros((6, chart.dim))
    near[:, 0] = 10.0 ** -np.arange(1, 7)
    near[:, 1] = 0.5 * near[:, 0]
    gradient = float(np.max(np.linalg.norm(H.gradient(0.0, near), axis=1)))

    report = ConjugacyReport(
        samples=count,
        times=times,
        definitional_gap=definitional,
        conjugacy_residual=residual,
        gradient_near_axis=gradient,
        ellipse_ratio=ellipse_ratio(),
        seed=seed,
    )
    return H, F, report


# ==========================================
# Displacement
# ==========================================


def rotation_system(chart: ContactChart, angle: float = np.pi, name: str = "rotation") -> ContactDynamicalSystem:
    """Rigid rotation of every plane by `angle` over [0, 1]; strict and explicit."""
    return ContactDynamicalSystem.generate(RotationHamiltonian(chart, angle, name=name))


def annular_sector(
    chart: ContactChart,
    radii: tuple[float, float] = (0.3, 0.5),
    angles: tuple[float, float] = (0.0, 1.0),
    heights: tuple[float, float] = (-0.2, 0.2),
) -> list[tuple[float, float]]:
    """A sector in the first plane, full discs in the others; a half turn displaces it."""
    if chart.is_torus:
        raise ChartError("annular sectors live on Darboux charts")
    rows = [radii, angles]
    for _ in range(1, chart.n):
        rows += [(0.0, radii[1]), (0.0, TWO_PI)]
    return rows + [heights]
