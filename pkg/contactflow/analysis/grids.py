"""
Evaluation grids and sample clouds.

Darboux grids are midpoint grids in polar coordinates weighted by the polar
volume density n! r_1 ... r_n times the cell volume; T^3 grids are uniform
midpoint grids with unit density.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from contactflow.core.errors import ChartError
from contactflow.dynamics.charts import ContactChart
from contactflow.schemas.report import GridSpec


@dataclass(frozen=True, eq=False)
class SpatialGrid:
    chart: ContactChart
    points: np.ndarray
    coords: np.ndarray
    weights: np.ndarray
    cells: np.ndarray
    box: np.ndarray
    counts: tuple[int, ...]

    @property
    def spec(self) -> GridSpec:
        return GridSpec(
            chart_kind=self.chart.kind.value,
            counts=list(self.counts),
            box=[(float(lo), float(hi)) for lo, hi in self.box],
        )

    def spec_with(self, knots: Optional[Sequence[float]] = None, seed: Optional[int] = None) -> GridSpec:
        spec = self.spec
        spec.time_knots = 0 if knots is None else len(knots)
        spec.seed = seed
        return spec

    @property
    def total_volume(self) -> float:
        return float(np.sum(self.weights))

    def boundary_points(self) -> np.ndarray:
        """
        Points on the radial and height faces of the grid box that lie strictly
        inside the chart domain. Faces shared with the chart boundary are skipped;
        T^3 grids have none.
        """
        dim = self.chart.dim
        if self.chart.is_torus:
            return np.empty((0, dim))
        chart_box = np.asarray(self.chart.box, dtype=float)
        faces = []
        for axis in list(range(0, dim - 1, 2)) + [dim - 1]:
            lo, hi = self.box[axis]
            for value, edge in ((lo, chart_box[axis, 0]), (hi, chart_box[axis, 1])):
                if abs(value - edge) <= 1e-12 or (axis < dim - 1 and value <= 0.0):
                    continue
                face = self.coords.copy()
                face[:, axis] = value
                faces.append(face)
        if not faces:
            return np.empty((0, dim))
        return self.chart.from_polar(np.concatenate(faces))


def _counts(chart: ContactChart, counts: int | Sequence[int]) -> tuple[int, ...]:
    if isinstance(counts, (int, np.integer)):
        counts = [int(counts)] * chart.dim
    counts = tuple(int(c) for c in counts)
    if len(counts) != chart.dim or min(counts) < 1:
        raise ChartError(f"grid needs {chart.dim} positive counts, got {counts}")
    return counts


def _validated_box(chart: ContactChart, box: Optional[Sequence[Sequence[float]]]) -> np.ndarray:
    box = np.asarray(chart.box if box is None else box, dtype=float)
    if box.shape != (chart.dim, 2) or np.any(box[:, 1] <= box[:, 0]):
        raise ChartError(f"degenerate grid box {box.tolist()}")
    return box


def make_grid(
    chart: ContactChart, counts: int | Sequence[int], box: Optional[Sequence[Sequence[float]]] = None
) -> SpatialGrid:
    """Midpoint grid over a box in chart coordinates (polar order on Darboux charts)."""
    counts = _counts(chart, counts)
    box = _validated_box(chart, box)
    if not chart.is_torus:
        outer = np.asarray(chart.box, dtype=float)
        if np.any(box[:, 0] < outer[:, 0] - 1e-12) or np.any(box[:, 1] > outer[:, 1] + 1e-12):
            raise ChartError(f"grid box {box.tolist()} leaves the chart box")
    cells = (box[:, 1] - box[:, 0]) / np.asarray(counts)
    axes = [lo + (np.arange(c) + 0.5) * w for (lo, _), c, w in zip(box, counts, cells)]
    coords = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, chart.dim)
    points = chart.from_polar(coords)
    weights = chart.polar_volume_density(coords) * float(np.prod(cells))
    return SpatialGrid(chart, points, coords, weights, cells, box, counts)


def time_knots(interval: tuple[float, float], count: int) -> np.ndarray:
    """Uniform knots including both ends; count must be odd for Simpson quadrature to be exact on cubics."""
    if count < 2:
        raise ValueError("need at least two time knots")
    return np.linspace(interval[0], interval[1], count)


def sample_points(
    chart: ContactChart, count: int, seed: int, box: Optional[Sequence[Sequence[float]]] = None
) -> np.ndarray:
    """Uniform random points in a chart-coordinate box, in Cartesian layout."""
    box = _validated_box(chart, box)
    rng = np.random.default_rng(seed)
    coords = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((count, chart.dim))
    return chart.from_polar(coords)


def segment_knots(
    interval: tuple[float, float], breakpoints: Sequence[float], per_segment: int = 17, max_spacing: float = 1.0 / 64
) -> np.ndarray:
    """
    Union of uniform knots on the segments between breakpoints, each segment
    getting at least `per_segment` knots and spacing at most `max_spacing`.
    Resolves reparameterizations whose derivative ramps over short segments.
    """
    a, b = float(interval[0]), float(interval[1])
    edges = sorted({a, b} | {float(t) for t in breakpoints if a < t < b})
    pieces = [np.array([a])]
    for lo, hi in zip(edges[:-1], edges[1:]):
        count = max(per_segment, int(np.ceil((hi - lo) / max_spacing)) + 1)
        count += (count + 1) % 2
        pieces.append(np.linspace(lo, hi, count)[1:])
    return np.concatenate(pieces)


def inner_box(chart: ContactChart, fraction: float = 0.5) -> np.ndarray:
    """
    Box for probe clouds away from the chart boundary: radii up to `fraction`
    of the chart radius and the central `fraction` of the z range. T^3 keeps its box.
    """
    box = np.asarray(chart.box, dtype=float).copy()
    if chart.is_torus:
        return box
    box[0:-1:2, 0] = 0.0
    box[0:-1:2, 1] *= fraction
    middle, half = box[-1].mean(), 0.5 * (box[-1, 1] - box[-1, 0])
    box[-1] = (middle - fraction * half, middle + fraction * half)
    return box
