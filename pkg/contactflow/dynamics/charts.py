"""
Explicit contact charts.

Two charts are housed: the standard Darboux chart on R^{2n+1} with
alpha = dz + 1/2 sum (x_i dy_i - y_i dx_i) (polar form dz + 1/2 sum r_i^2 dtheta_i)
and the three-torus with alpha = cos z dx - sin z dy. Either may carry a form
scale f, in which case the housed form is e^f alpha.

Points are rows in Cartesian layout: (x1, y1, ..., xn, yn, z) on Darboux
charts and (x, y, z) on T^3. Polar coordinates are used only for boxes,
grids and display.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from math import factorial
from typing import Callable, Optional

import numpy as np

from contactflow.core.errors import ChartError, DomainError
from contactflow.dynamics.profiles import TWO_PI
from contactflow.schemas.chart import ChartSpec, FormScaleSpec


class ChartKind(str, Enum):
    DARBOUX = "darboux_polar"
    TORUS3 = "torus3"


# ==========================================
# Form scales
# ==========================================


@dataclass(frozen=True, eq=False)
class FormScale:
    """A named scalar field f with its gradient, used for the form e^f alpha."""

    name: str
    coefficient: float
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]

    @property
    def spec(self) -> FormScaleSpec:
        return FormScaleSpec(name=self.name, coefficient=self.coefficient)


def _z_only(points: np.ndarray, dz: np.ndarray) -> np.ndarray:
    grad = np.zeros_like(points)
    grad[:, -1] = dz
    return grad


def make_form_scale(name: str, coefficient: float) -> FormScale:
    """Build a builtin form scale by name."""
    c = float(coefficient)
    if name == "linear_z":
        return FormScale(name, c, lambda p: c * p[:, -1], lambda p: _z_only(p, np.full(len(p), c)))
    if name == "sine_z":
        return FormScale(name, c, lambda p: c * np.sin(p[:, -1]), lambda p: _z_only(p, c * np.cos(p[:, -1])))
    if name == "radial":

        def radial_gradient(p: np.ndarray) -> np.ndarray:
            grad = 2.0 * c * p
            grad[:, -1] = 0.0
            return grad

        return FormScale(name, c, lambda p: c * np.sum(p[:, :-1] ** 2, axis=1), radial_gradient)
    raise ChartError(f"Unknown form scale '{name}'")


# ==========================================
# Charts
# ==========================================


@dataclass(frozen=True, eq=False)
class ContactChart:
    """
    An explicit coordinate domain carrying a contact form.

    Attributes:
        kind: Darboux (polar boxes) or the three-torus
        n: Half the dimension of the contact structure, dimension is 2n + 1
        box: Per-coordinate closed intervals, polar order on Darboux charts
        form_scale: Optional f for the rescaled form e^f alpha
    """

    kind: ChartKind
    n: int
    box: np.ndarray
    form_scale: Optional[FormScale] = None

    @property
    def dim(self) -> int:
        return 2 * self.n + 1

    @property
    def is_torus(self) -> bool:
        return self.kind is ChartKind.TORUS3

    @property
    def spec(self) -> ChartSpec:
        return ChartSpec(
            kind=self.kind.value,
            n=self.n,
            box=[(float(lo), float(hi)) for lo, hi in self.box],
            form_scale=self.form_scale.spec if self.form_scale else None,
        )

    def same_as(self, other: "ContactChart") -> bool:
        return self is other or self.spec == other.spec

    def with_form_scale(self, form_scale: Optional[FormScale]) -> "ContactChart":
        return ContactChart(self.kind, self.n, self.box.copy(), form_scale)

    # ------------------------------------------
    # Form data
    # ------------------------------------------

    def _base_alpha(self, points: np.ndarray) -> np.ndarray:
        coeffs = np.zeros_like(points)
        if self.is_torus:
            z = points[:, 2]
            coeffs[:, 0] = np.cos(z)
            coeffs[:, 1] = -np.sin(z)
        else:
            coeffs[:, 0:-1:2] = -0.5 * points[:, 1:-1:2]
            coeffs[:, 1:-1:2] = 0.5 * points[:, 0:-1:2]
            coeffs[:, -1] = 1.0
        return coeffs

    def _base_omega(self, points: np.ndarray) -> np.ndarray:
        """Matrix of d alpha: omega[:, i, j] = d alpha(e_i, e_j)."""
        n, d = points.shape
        omega = np.zeros((n, d, d))
        if self.is_torus:
            s, c = np.sin(points[:, 2]), np.cos(points[:, 2])
            omega[:, 0, 2], omega[:, 2, 0] = s, -s
            omega[:, 1, 2], omega[:, 2, 1] = c, -c
        else:
            for i in range(self.n):
                omega[:, 2 * i, 2 * i + 1] = 1.0
                omega[:, 2 * i + 1, 2 * i] = -1.0
        return omega

    def alpha(self, points: np.ndarray) -> np.ndarray:
        """Coefficients of the housed form at each point, shape (N, dim)."""
        points = self._rows(points)
        coeffs = self._base_alpha(points)
        if self.form_scale is None:
            return coeffs
        return np.exp(self.form_scale.value(points))[:, None] * coeffs

    def omega(self, points: np.ndarray) -> np.ndarray:
        """Matrix of the exterior derivative of the housed form, shape (N, dim, dim)."""
        points = self._rows(points)
        omega = self._base_omega(points)
        if self.form_scale is None:
            return omega
        # d(e^f a) = e^f (df ^ a + da)
        a = self._base_alpha(points)
        g = self.form_scale.gradient(points)
        scaled = omega + g[:, :, None] * a[:, None, :] - a[:, :, None] * g[:, None, :]
        return np.exp(self.form_scale.value(points))[:, None, None] * scaled

    def _normal_matrix(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        beta = self.alpha(points)
        omega = self.omega(points)
        normal = omega @ np.swapaxes(omega, 1, 2) + beta[:, :, None] * beta[:, None, :]
        return beta, omega, normal

    def reeb(self, points: np.ndarray) -> np.ndarray:
        """Reeb field R with alpha(R) = 1 and iota(R) d alpha = 0."""
        points = self._rows(points)
        if self.form_scale is None:
            field = np.zeros_like(points)
            if self.is_torus:
                field[:, 0] = np.cos(points[:, 2])
                field[:, 1] = -np.sin(points[:, 2])
            else:
                field[:, -1] = 1.0
            return field
        beta, _, normal = self._normal_matrix(points)
        return np.linalg.solve(normal, beta[:, :, None])[:, :, 0]

    def contact_field(
        self, points: np.ndarray, values: np.ndarray, gradients: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """
        Solve iota(X) alpha = H, iota(X) d alpha = mu alpha - dH for X.

        Args:
            points: Base points, shape (N, dim)
            values: H at the points, shape (N,)
            gradients: dH at the points, shape (N, dim)

        Returns:
            (X, mu) with X of shape (N, dim) and mu = dH(R) of shape (N,)
        """
        points = self._rows(points)
        values = np.asarray(values, dtype=float)
        g = np.asarray(gradients, dtype=float)
        if self.form_scale is not None:
            beta, omega, normal = self._normal_matrix(points)
            mu = np.einsum("nd,nd->n", g, self.reeb(points))
            rhs = np.einsum("nij,nj->ni", omega, mu[:, None] * beta - g) + beta * values[:, None]
            return np.linalg.solve(normal, rhs[:, :, None])[:, :, 0], mu

        field = np.empty_like(points)
        if self.is_torus:
            s, c = np.sin(points[:, 2]), np.cos(points[:, 2])
            gx, gy, gz = g[:, 0], g[:, 1], g[:, 2]
            mu = c * gx - s * gy
            field[:, 0] = values * c - gz * s
            field[:, 1] = -values * s - gz * c
            field[:, 2] = s * gx + c * gy
            return field, mu

        mu = g[:, -1]
        x, y = points[:, 0:-1:2], points[:, 1:-1:2]
        gx, gy = g[:, 0:-1:2], g[:, 1:-1:2]
        field[:, 0:-1:2] = 0.5 * x * mu[:, None] - gy
        field[:, 1:-1:2] = 0.5 * y * mu[:, None] + gx
        field[:, -1] = values - 0.5 * np.sum(x * gx + y * gy, axis=1)
        return field, mu

    def volume_density(self, points: np.ndarray) -> np.ndarray:
        """Density of alpha ^ (d alpha)^n against the Cartesian coordinate measure."""
        points = self.require_inside(points)
        base = float(factorial(self.n))
        density = np.full(len(points), base)
        if self.form_scale is not None:
            density = density * np.exp((self.n + 1) * self.form_scale.value(points))
        return density

    def polar_volume_density(self, coords: np.ndarray) -> np.ndarray:
        """Density against the polar coordinate measure dr dtheta dz (Darboux charts)."""
        coords = self._rows(coords)
        if self.is_torus:
            return self.volume_density(coords)
        radii = np.prod(coords[:, 0:-1:2], axis=1)
        return radii * self.volume_density(self.from_polar(coords))

    # ------------------------------------------
    # Geometry
    # ------------------------------------------

    def to_polar(self, points: np.ndarray) -> np.ndarray:
        """Cartesian rows to (r1, theta1, ..., z); theta in [0, 2 pi), 0 on the axis."""
        points = self._rows(points)
        if self.is_torus:
            return np.mod(points, TWO_PI)
        out = np.empty_like(points)
        x, y = points[:, 0:-1:2], points[:, 1:-1:2]
        out[:, 0:-1:2] = np.hypot(x, y)
        out[:, 1:-1:2] = np.mod(np.arctan2(y, x), TWO_PI)
        out[:, -1] = points[:, -1]
        return out

    def from_polar(self, coords: np.ndarray) -> np.ndarray:
        coords = self._rows(coords)
        if self.is_torus:
            return coords.copy()
        out = np.empty_like(coords)
        r, theta = coords[:, 0:-1:2], coords[:, 1:-1:2]
        out[:, 0:-1:2] = r * np.cos(theta)
        out[:, 1:-1:2] = r * np.sin(theta)
        out[:, -1] = coords[:, -1]
        return out

    def point_distance(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Euclidean distance on Darboux charts, flat quotient distance on T^3."""
        diff = self._rows(p) - self._rows(q)
        if self.is_torus:
            diff = np.mod(diff + np.pi, TWO_PI) - np.pi
        return np.sqrt(np.sum(diff**2, axis=1))

    def wrap(self, points: np.ndarray) -> np.ndarray:
        """Output form of integrated points: angular coordinates reduced mod 2 pi."""
        points = self._rows(points)
        return np.mod(points, TWO_PI) if self.is_torus else points

    def contains(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
        """Mask of rows inside the box (radii and heights on Darboux charts)."""
        points = self._rows(points)
        if self.is_torus:
            return np.ones(len(points), dtype=bool)
        polar = self.to_polar(points)
        ok = np.ones(len(points), dtype=bool)
        for axis in list(range(0, self.dim - 1, 2)) + [self.dim - 1]:
            lo, hi = self.box[axis]
            ok &= (polar[:, axis] >= lo - margin) & (polar[:, axis] <= hi + margin)
        return ok

    def require_inside(self, points: np.ndarray, margin: float = 1e-12) -> np.ndarray:
        points = self._rows(points)
        inside = self.contains(points, margin)
        if not np.all(inside):
            raise DomainError(f"{int(np.sum(~inside))} point(s) outside the chart domain", points[~inside])
        return points

    def _rows(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.dim:
            raise ChartError(f"expected points of arity {self.dim}, got {points.shape[1]}")
        return points


def _default_box(kind: ChartKind, n: int) -> list[tuple[float, float]]:
    if kind is ChartKind.TORUS3:
        return [(0.0, TWO_PI)] * 3
    return [(0.0, 1.0), (0.0, TWO_PI)] * n + [(-1.0, 1.0)]


def make_chart(
    kind: ChartKind | str,
    domain: Optional[list[tuple[float, float]]] = None,
    n: int = 1,
    form_scale: Optional[FormScale] = None,
) -> ContactChart:
    """
    Build a chart and validate its box.

    Raises:
        ChartError: Unknown kind, n < 1, wrong box arity or a degenerate interval
    """
    try:
        kind = ChartKind(kind)
    except ValueError:
        raise ChartError(f"Unknown chart kind '{kind}'") from None
    if n < 1:
        raise ChartError("Darboux charts need n >= 1")
    if kind is ChartKind.TORUS3 and n != 1:
        raise ChartError("T^3 has n = 1")

    box = np.asarray(domain if domain is not None else _default_box(kind, n), dtype=float)
    if box.shape != (2 * n + 1, 2):
        raise ChartError(f"box must list {2 * n + 1} intervals, got shape {box.shape}")
    if np.any(box[:, 1] <= box[:, 0]):
        raise ChartError(f"degenerate box {box.tolist()}")
    if kind is ChartKind.DARBOUX:
        if np.any(box[0:-1:2, 0] < 0.0):
            raise ChartError("radial intervals must be nonnegative")
        if np.any(box[1:-1:2, 1] - box[1:-1:2, 0] > TWO_PI + 1e-12):
            raise ChartError("angular intervals cannot exceed 2 pi")
    return ContactChart(kind, n, box, form_scale)


def chart_from_spec(spec: ChartSpec) -> ContactChart:
    scale = make_form_scale(spec.form_scale.name, spec.form_scale.coefficient) if spec.form_scale else None
    return make_chart(spec.kind, spec.box, spec.n, scale)


def reeb_field(chart: ContactChart) -> Callable[[np.ndarray], np.ndarray]:
    """Evaluator of the Reeb field of the chart's form."""
    return chart.reeb


def volume_density(chart: ContactChart, points: np.ndarray) -> np.ndarray:
    """
    Density of alpha ^ (d alpha)^n against the Cartesian measure at Cartesian points.
    For the density against dr dtheta dz (r on the standard 3-dimensional chart) use
    `chart.polar_volume_density` on polar coordinates.
    """
    return chart.volume_density(points)


def form_derivative(chart: ContactChart, points: np.ndarray) -> np.ndarray:
    """Antisymmetric matrix of d alpha for the housed form, e^f (df ^ alpha + d alpha) when scaled."""
    return chart.omega(points)


def form_residuals(chart: ContactChart, points: np.ndarray) -> tuple[float, float]:
    """max |alpha(R) - 1| and max |iota(R) d alpha| over the points."""
    reeb = chart.reeb(points)
    pairing = np.einsum("nd,nd->n", chart.alpha(points), reeb)
    contraction = np.einsum("ni,nij->nj", reeb, chart.omega(points))
    return float(np.max(np.abs(pairing - 1.0))), float(np.max(np.abs(contraction)))
