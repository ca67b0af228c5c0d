"""
Time-dependent Hamiltonians and the contact vector fields they generate.

A Hamiltonian H determines its field X through
    iota(X) alpha = H,  iota(X) d alpha = (R.H) alpha - dH,
and mu = R.H is the integrand of the conformal factor.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from contactflow.core.errors import ChartError, ChartMismatchError, TimeRangeError
from contactflow.core.logging import get_logger
from contactflow.dynamics import differences
from contactflow.dynamics.charts import ContactChart

logger = get_logger(__name__)

# forward(t, points) -> (images, conformal factor); inverse likewise
PointFlow = Callable[[float, np.ndarray], tuple[np.ndarray, np.ndarray]]

TIME_SLACK = 1e-9


class Hamiltonian(ABC):
    """
    A time-dependent scalar field on a chart.

    Subclasses implement `_evaluate` and, when they know it in closed form,
    `_gradient`; otherwise the gradient comes from fourth-order finite
    differences batched over all stencil points.
    """

    kind = "closed_form"

    def __init__(
        self,
        chart: ContactChart,
        interval: tuple[float, float] = (0.0, 1.0),
        support: Optional[np.ndarray] = None,
        name: str = "H",
    ):
        a, b = float(interval[0]), float(interval[1])
        if not a < b:
            raise TimeRangeError(f"empty time interval [{a}, {b}]")
        self.chart = chart
        self.interval = (a, b)
        self.support = None if support is None else np.asarray(support, dtype=float)
        self.name = name

    @abstractmethod
    def _evaluate(self, t: float, points: np.ndarray) -> np.ndarray:
        """Values at rows of Cartesian points, shape (N,)."""

    def _gradient(self, t: float, points: np.ndarray) -> np.ndarray:
        return differences.gradient(lambda p: self._evaluate(t, p), points)

    # ------------------------------------------
    # Public evaluation
    # ------------------------------------------

    def value(self, t: float, points: np.ndarray) -> np.ndarray:
        t = self.check_time(t)
        return self._evaluate(t, self.chart.require_inside(points))

    __call__ = value

    def gradient(self, t: float, points: np.ndarray) -> np.ndarray:
        t = self.check_time(t)
        return self._gradient(t, self.chart.require_inside(points))

    def check_time(self, t: float) -> float:
        a, b = self.interval
        t = float(t)
        if t < a - TIME_SLACK or t > b + TIME_SLACK:
            raise TimeRangeError(f"{self.name}: t={t} outside [{a}, {b}]")
        return min(max(t, a), b)

    # ------------------------------------------
    # Structure
    # ------------------------------------------

    @property
    def breakpoints(self) -> tuple[float, ...]:
        """Times across which the Hamiltonian may fail to be smooth."""
        return self.interval

    @property
    def is_autonomous(self) -> bool:
        return False

    @property
    def is_basic(self) -> bool:
        """Known in closed form to satisfy R.H = 0."""
        return False

    @property
    def flat_margin(self) -> Optional[float]:
        """Width near each end of the interval on which H is known to vanish."""
        return None

    def closed_form_flow(self) -> Optional[tuple[PointFlow, PointFlow]]:
        """Exact (forward, inverse) flow evaluators when the family has them."""
        return None

    def field(self) -> "ContactVectorField":
        return ContactVectorField(self)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name}, interval={self.interval})"


@dataclass(frozen=True, eq=False)
class ContactVectorField:
    """The contact vector field X_H and its Reeb derivative mu = R.H."""

    hamiltonian: Hamiltonian

    @property
    def chart(self) -> ContactChart:
        return self.hamiltonian.chart

    def evaluate(self, t: float, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(X, mu) without range checks; the integrators call this."""
        H = self.hamiltonian
        return self.chart.contact_field(points, H._evaluate(t, points), H._gradient(t, points))

    def __call__(self, t: float, points: np.ndarray) -> np.ndarray:
        t = self.hamiltonian.check_time(t)
        return self.evaluate(t, self.chart.require_inside(points))[0]

    def reeb_derivative(self, t: float, points: np.ndarray) -> np.ndarray:
        return reeb_derivative(self.hamiltonian, t, points)


# ==========================================
# Operations
# ==========================================


def contact_vector_field(H: Hamiltonian) -> ContactVectorField:
    return ContactVectorField(H)


def reeb_derivative(H: Hamiltonian, t: float, points: np.ndarray) -> np.ndarray:
    """mu = dH(R) at the points."""
    points = H.chart.require_inside(points)
    return np.einsum("nd,nd->n", H.gradient(t, points), H.chart.reeb(points))


def poisson_bracket(H: Hamiltonian, F: Hamiltonian, t: float, points: np.ndarray) -> np.ndarray:
    """
    {H, F} = -alpha([X_H, X_F]) with the Lie bracket [X, Y] = DY.X - DX.Y
    taken by finite-difference Jacobians.
    """
    if not H.chart.same_as(F.chart):
        raise ChartMismatchError(f"{H.name} and {F.name} live on different charts")
    t = F.check_time(H.check_time(t))
    points = H.chart.require_inside(points)
    x_h, y_f = ContactVectorField(H), ContactVectorField(F)
    jac_h = differences.jacobian(lambda p: x_h.evaluate(t, p)[0], points)
    jac_f = differences.jacobian(lambda p: y_f.evaluate(t, p)[0], points)
    xh, xf = x_h.evaluate(t, points)[0], y_f.evaluate(t, points)[0]
    bracket = np.einsum("nij,nj->ni", jac_f, xh) - np.einsum("nij,nj->ni", jac_h, xf)
    return -np.einsum("nd,nd->n", H.chart.alpha(points), bracket)


def defining_residuals(field: ContactVectorField, t: float, points: np.ndarray) -> tuple[float, float]:
    """
    Residuals of the two defining relations with dH from finite differences,
    independent of the gradient used to build the field.

    Returns:
        (max |iota(X) alpha - H|, max |iota(X) d alpha - (mu alpha - dH)|)
    """
    H = field.hamiltonian
    chart = field.chart
    t = H.check_time(t)
    points = chart.require_inside(points)
    X, mu = field.evaluate(t, points)
    values = H._evaluate(t, points)
    dH = differences.gradient(lambda p: H._evaluate(t, p), points)
    alpha = chart.alpha(points)
    first = np.abs(np.einsum("nd,nd->n", alpha, X) - values)
    contraction = np.einsum("ni,nij->nj", X, chart.omega(points))
    second = np.abs(contraction - (mu[:, None] * alpha - dH))
    return float(np.max(first)), float(np.max(second))


def is_basic(H: Hamiltonian, points: np.ndarray, times: Sequence[float], tol: float = 1e-8) -> bool:
    """True when R.H vanishes at every sampled point and time."""
    return all(float(np.max(np.abs(reeb_derivative(H, t, points)))) <= tol for t in times)


# ==========================================
# Generic kinds
# ==========================================


class LinearCombination(Hamiltonian):
    """sum_k c_k H_k over Hamiltonians sharing chart and interval."""

    def __init__(self, terms: Sequence[tuple[float, Hamiltonian]], name: Optional[str] = None):
        if not terms:
            raise ValueError("empty linear combination")
        first = terms[0][1]
        for _, H in terms[1:]:
            if not H.chart.same_as(first.chart):
                raise ChartMismatchError(f"{H.name} and {first.name} live on different charts")
            if H.interval != first.interval:
                raise TimeRangeError(f"{H.name} and {first.name} have different time intervals")
        label = name or " + ".join(f"{c:g}*{H.name}" for c, H in terms)
        super().__init__(first.chart, first.interval, None, label)
        self.terms = [(float(c), H) for c, H in terms]

    def _evaluate(self, t, points):
        return sum(c * H._evaluate(t, points) for c, H in self.terms)

    def _gradient(self, t, points):
        return sum(c * H._gradient(t, points) for c, H in self.terms)

    @property
    def breakpoints(self):
        return tuple(sorted(set().union(*(H.breakpoints for _, H in self.terms))))

    @property
    def is_autonomous(self):
        return all(H.is_autonomous for _, H in self.terms)

    @property
    def is_basic(self):
        return all(H.is_basic for _, H in self.terms)


def difference(H: Hamiltonian, F: Hamiltonian) -> LinearCombination:
    """H - F as a Hamiltonian."""
    return LinearCombination([(1.0, H), (-1.0, F)], name=f"{H.name} - {F.name}")


class GridSampledHamiltonian(Hamiltonian):
    """
    Tabulated Hamiltonian: cubic in space on a Cartesian tensor grid, linear in
    time between knots. Points off the grid evaluate to 0; on T^3 points are
    reduced mod 2 pi first.
    """

    kind = "grid_sampled"

    def __init__(
        self,
        chart: ContactChart,
        times: np.ndarray,
        axes: Sequence[np.ndarray],
        values: np.ndarray,
        name: str = "H_grid",
    ):
        times = np.asarray(times, dtype=float)
        if len(axes) != chart.dim:
            raise ChartError(f"grid needs {chart.dim} axes, got {len(axes)}")
        if values.shape != (len(times),) + tuple(len(a) for a in axes):
            raise ValueError(f"values shape {values.shape} does not match knots and axes")
        super().__init__(chart, (times[0], times[-1]), None, name)
        self.times = times
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self._slices = [
            RegularGridInterpolator(self.axes, values[k], method="cubic", bounds_error=False, fill_value=0.0)
            for k in range(len(times))
        ]

    def _evaluate(self, t, points):
        if self.chart.is_torus:
            points = self.chart.wrap(points)
        k = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2))
        t0, t1 = self.times[k], self.times[k + 1]
        w = (t - t0) / (t1 - t0)
        return (1.0 - w) * self._slices[k](points) + w * self._slices[k + 1](points)

    @property
    def breakpoints(self):
        return tuple(self.times)


def materialize(H: Hamiltonian, axes: Sequence[np.ndarray], times: np.ndarray) -> GridSampledHamiltonian:
    """Sample H on a tensor grid and time knots."""
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, H.chart.dim)
    shape = tuple(len(a) for a in axes)
    values = np.stack([H._evaluate(float(t), mesh).reshape(shape) for t in times])
    logger.info(f"Materialized {H.name} on {mesh.shape[0]} points x {len(times)} knots")
    return GridSampledHamiltonian(H.chart, times, axes, values, name=f"{H.name}[grid]")
