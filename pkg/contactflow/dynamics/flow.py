"""
Contact isotopies and their conformal factors.

Integrated flows use the classical fixed-step fourth-order Runge-Kutta scheme
on the state (x, q) with x' = X_t(x) and q' = mu_t(x), so q is the conformal
factor h_t = integral of (R.H_s) o phi_s. Inverses come from integrating the
same field backwards from t to the start of the interval; the backward q is
then the conformal factor of the inverse map.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from contactflow.core.config import settings
from contactflow.core.errors import (
    ChartMismatchError,
    EmptySampleError,
    FlowEscapeError,
    IntegratorError,
    PairingError,
    TimeRangeError,
)
from contactflow.core.logging import get_logger
from contactflow.dynamics import differences
from contactflow.dynamics.charts import ContactChart
from contactflow.dynamics.hamfield import TIME_SLACK, ContactVectorField, Hamiltonian, PointFlow

logger = get_logger(__name__)

LARGE_CLOUD = 1000


class PointMap(Protocol):
    """A fixed contact map with its conformal factor: psi^* alpha = e^g alpha."""

    chart: ContactChart

    def apply(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...

    def apply_inverse(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...


class FlowMap(ABC):
    """
    A sampled isotopy t -> phi_t on [a, b] together with its conformal factor.

    `evaluate` returns (phi_t(x), h_t(x)); `inverse_evaluate` returns
    (phi_t^{-1}(y), conformal factor of phi_t^{-1} at y).
    """

    def __init__(
        self,
        chart: ContactChart,
        interval: tuple[float, float],
        hamiltonian: Optional[Hamiltonian] = None,
        name: str = "Phi",
        step: Optional[float] = None,
        order: Optional[int] = None,
    ):
        self.chart = chart
        self.interval = (float(interval[0]), float(interval[1]))
        self.hamiltonian = hamiltonian
        self.name = name
        self.step = step
        self.order = order

    @abstractmethod
    def _forward(self, t: float, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...

    @abstractmethod
    def _inverse(self, t: float, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...

    @property
    def is_identity_based(self) -> bool:
        return True

    def check_time(self, t: float) -> float:
        a, b = self.interval
        t = float(t)
        if t < a - TIME_SLACK or t > b + TIME_SLACK:
            raise TimeRangeError(f"{self.name}: t={t} outside [{a}, {b}]")
        return min(max(t, a), b)

    def evaluate(self, t: float, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self._forward(self.check_time(t), self.chart._rows(points))

    def inverse_evaluate(self, t: float, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self._inverse(self.check_time(t), self.chart._rows(points))

    def __call__(self, t: float, points: np.ndarray) -> np.ndarray:
        return self.evaluate(t, points)[0]

    def conformal(self, t: float, points: np.ndarray) -> np.ndarray:
        return self.evaluate(t, points)[1]

    def inverse(self, t: float, points: np.ndarray) -> np.ndarray:
        return self.inverse_evaluate(t, points)[0]

    def trajectory(self, points: np.ndarray, times: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        """Images and conformal factors at several times, shapes (T, N, dim) and (T, N)."""
        results = [self.evaluate(t, points) for t in times]
        return np.stack([r[0] for r in results]), np.stack([r[1] for r in results])

    def end_map(self) -> "TimeSliceMap":
        return TimeSliceMap(self, self.interval[1])

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name}, interval={self.interval})"


# ==========================================
# Integrated flows
# ==========================================


def time_grid(interval: tuple[float, float], breakpoints: Sequence[float], step: float) -> np.ndarray:
    """Union of uniform subdivisions of width <= step between consecutive breakpoints."""
    a, b = interval
    knots = sorted({a, b} | {float(t) for t in breakpoints if a < t < b})
    pieces = [np.array([a])]
    for lo, hi in zip(knots[:-1], knots[1:]):
        count = max(1, int(np.ceil((hi - lo) / step - 1e-9)))
        pieces.append(np.linspace(lo, hi, count + 1)[1:])
    return np.concatenate(pieces)


def rk4_step(
    field: Callable[[float, np.ndarray], tuple[np.ndarray, np.ndarray]], t: float, x: np.ndarray, dt: float
) -> tuple[np.ndarray, np.ndarray]:
    """One classical Runge-Kutta step of (x, q); returns the new x and the q increment."""
    k1, m1 = field(t, x)
    k2, m2 = field(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3, m3 = field(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4, m4 = field(t + dt, x + dt * k3)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), dt / 6.0 * (m1 + 2.0 * m2 + 2.0 * m3 + m4)


class IntegratedFlow(FlowMap):
    """
    RK4 integral of a contact vector field, optionally based at a map psi:
    Phi_t = phi_t o psi with conformal factor h_t o psi + g.
    """

    def __init__(
        self,
        field: ContactVectorField,
        step: Optional[float] = None,
        base: Optional[PointMap] = None,
        name: Optional[str] = None,
    ):
        step = settings.INTEGRATOR_STEP if step is None else float(step)
        if step <= 0:
            raise IntegratorError(f"integration step must be positive, got {step}")
        H = field.hamiltonian
        super().__init__(H.chart, H.interval, H, name or f"Phi[{H.name}]", step, 4)
        self.field = field
        self.base = base
        self.nodes = time_grid(H.interval, H.breakpoints, step)

    @property
    def is_identity_based(self):
        return self.base is None

    def _check_escape(self, x: np.ndarray, t: float) -> None:
        if self.chart.is_torus:
            return
        inside = self.chart.contains(x, settings.DOMAIN_MARGIN)
        if not np.all(inside):
            point = x[np.argmin(inside)]
            logger.error(f"{self.name}: trajectory left the chart at t={t:.6g}")
            raise FlowEscapeError(point, t)

    def _step(self, t: float, x: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
        x_new, dq = rk4_step(self.field.evaluate, t, x, dt)
        self._check_escape(x_new, t + dt)
        return x_new, dq

    def _march(self, points: np.ndarray, times: Sequence[float]) -> list[tuple[np.ndarray, np.ndarray]]:
        """
        One forward pass from the interval start; each requested time is reached
        by a partial step from the last node at or before it.
        """
        order = np.argsort(times, kind="stable")
        results: list = [None] * len(times)
        x, q = points, np.zeros(len(points))
        pending = 0
        nodes = self.nodes
        for k in range(len(nodes)):
            while pending < len(order) and (
                k == len(nodes) - 1 or times[order[pending]] < nodes[k + 1]
            ):
                tau = times[order[pending]]
                if tau <= nodes[k]:
                    results[order[pending]] = (x, q)
                else:
                    x_tau, dq = self._step(nodes[k], x, tau - nodes[k])
                    results[order[pending]] = (x_tau, q + dq)
                pending += 1
            if pending == len(order):
                break
            x, dq = self._step(nodes[k], x, nodes[k + 1] - nodes[k])
            q = q + dq
        return results

    def _forward_many(self, points: np.ndarray, times: Sequence[float]) -> list[tuple[np.ndarray, np.ndarray]]:
        if self.base is not None:
            start, g = self.base.apply(points)
        else:
            start, g = points, 0.0
        if len(points) >= LARGE_CLOUD:
            logger.info(f"Integrating {self.name} for {len(points)} points, step {self.step:g}")
        return [(x, q + g) for x, q in self._march(start, list(times))]

    def _forward(self, t, points):
        return self._forward_many(points, [t])[0]

    def _inverse(self, t, points):
        stops = [t] + [float(n) for n in self.nodes[::-1] if n < t - 1e-14]
        y, q = points, np.zeros(len(points))
        for hi, lo in zip(stops[:-1], stops[1:]):
            y, dq = self._step(hi, y, lo - hi)
            q = q + dq
        if self.base is not None:
            y, g_inv = self.base.apply_inverse(y)
            q = q + g_inv
        return y, q

    def trajectory(self, points, times):
        times = [self.check_time(t) for t in times]
        results = self._forward_many(self.chart._rows(points), times)
        return np.stack([r[0] for r in results]), np.stack([r[1] for r in results])


def integrate_flow(
    field: ContactVectorField, base_map: Optional[PointMap] = None, step: Optional[float] = None
) -> IntegratedFlow:
    """Integrate a contact vector field into a flow map (RK4, fixed step)."""
    return IntegratedFlow(field, step, base_map)


# ==========================================
# Closed-form and derived flows
# ==========================================


class ClosedFormFlow(FlowMap):
    """Flow given by exact forward and inverse evaluators."""

    def __init__(
        self,
        chart: ContactChart,
        interval: tuple[float, float],
        forward: PointFlow,
        inverse: PointFlow,
        hamiltonian: Optional[Hamiltonian] = None,
        name: str = "Phi[closed]",
    ):
        super().__init__(chart, interval, hamiltonian, name)
        self._fwd = forward
        self._inv = inverse

    def _forward(self, t, points):
        return self._fwd(t, points)

    def _inverse(self, t, points):
        return self._inv(t, points)


def flow_of(H: Hamiltonian, step: Optional[float] = None) -> FlowMap:
    """The flow of H: closed form when the family has one, RK4 otherwise."""
    closed = H.closed_form_flow()
    if closed is not None:
        return ClosedFormFlow(H.chart, H.interval, closed[0], closed[1], H, f"Phi[{H.name}]")
    return IntegratedFlow(H.field(), step)


class StationaryFlow(FlowMap):
    """The constant isotopy t -> psi (identity when no map is given)."""

    def __init__(
        self,
        chart: ContactChart,
        interval: tuple[float, float],
        point_map: Optional[PointMap] = None,
        hamiltonian: Optional[Hamiltonian] = None,
        name: str = "id",
    ):
        super().__init__(chart, interval, hamiltonian, name)
        self.point_map = point_map

    @property
    def is_identity_based(self):
        return self.point_map is None

    def _forward(self, t, points):
        if self.point_map is None:
            return points.copy(), np.zeros(len(points))
        return self.point_map.apply(points)

    def _inverse(self, t, points):
        if self.point_map is None:
            return points.copy(), np.zeros(len(points))
        return self.point_map.apply_inverse(points)


def _same_chart(first: FlowMap, second: FlowMap) -> None:
    if not first.chart.same_as(second.chart):
        raise ChartMismatchError(f"{first.name} and {second.name} live on different charts")


class ComposedFlow(FlowMap):
    """t -> outer_t o inner_t; conformal factor h_outer o inner + h_inner."""

    def __init__(self, outer: FlowMap, inner: FlowMap, hamiltonian: Optional[Hamiltonian] = None, name=None):
        _same_chart(outer, inner)
        if outer.interval != inner.interval:
            raise TimeRangeError(f"{outer.name} and {inner.name} have different time intervals")
        super().__init__(outer.chart, outer.interval, hamiltonian, name or f"{outer.name} o {inner.name}")
        self.outer = outer
        self.inner = inner

    @property
    def is_identity_based(self):
        return self.outer.is_identity_based and self.inner.is_identity_based

    def _forward(self, t, points):
        y, h_inner = self.inner._forward(t, points)
        z, h_outer = self.outer._forward(t, y)
        return z, h_inner + h_outer

    def _inverse(self, t, points):
        y, g_outer = self.outer._inverse(t, points)
        x, g_inner = self.inner._inverse(t, y)
        return x, g_outer + g_inner


class InverseFlow(FlowMap):
    """t -> phi_t^{-1}."""

    def __init__(self, flow: FlowMap, hamiltonian: Optional[Hamiltonian] = None, name=None):
        super().__init__(flow.chart, flow.interval, hamiltonian, name or f"{flow.name}^-1")
        self.flow = flow

    @property
    def is_identity_based(self):
        return self.flow.is_identity_based

    def _forward(self, t, points):
        return self.flow._inverse(t, points)

    def _inverse(self, t, points):
        return self.flow._forward(t, points)


class ConjugatedFlow(FlowMap):
    """t -> psi^{-1} o phi_t o psi."""

    def __init__(self, flow: FlowMap, psi: PointMap, hamiltonian: Optional[Hamiltonian] = None, name=None):
        super().__init__(flow.chart, flow.interval, hamiltonian, name or f"conj({flow.name})")
        self.flow = flow
        self.psi = psi

    def _forward(self, t, points):
        y, g = self.psi.apply(points)
        w, h = self.flow._forward(t, y)
        v, g_inv = self.psi.apply_inverse(w)
        return v, g + h + g_inv

    def _inverse(self, t, points):
        y, g = self.psi.apply(points)
        w, h_inv = self.flow._inverse(t, y)
        x, g_inv = self.psi.apply_inverse(w)
        return x, g + h_inv + g_inv


class LeftTranslatedFlow(FlowMap):
    """t -> psi o phi_t; conformal factor g o phi_t + h_t."""

    def __init__(self, psi: PointMap, flow: FlowMap, hamiltonian: Optional[Hamiltonian] = None, name=None):
        super().__init__(flow.chart, flow.interval, hamiltonian, name or f"psi o {flow.name}")
        self.psi = psi
        self.flow = flow

    @property
    def is_identity_based(self):
        return False

    def _forward(self, t, points):
        y, h = self.flow._forward(t, points)
        z, g = self.psi.apply(y)
        return z, h + g

    def _inverse(self, t, points):
        y, g_inv = self.psi.apply_inverse(points)
        x, h_inv = self.flow._inverse(t, y)
        return x, g_inv + h_inv


class ReparamFlow(FlowMap):
    """t -> phi_{zeta(t)}; the conformal factor is h_{zeta(t)}."""

    def __init__(
        self,
        flow: FlowMap,
        zeta: Callable[[float], float],
        interval: tuple[float, float],
        hamiltonian: Optional[Hamiltonian] = None,
        name=None,
    ):
        super().__init__(flow.chart, interval, hamiltonian, name or f"{flow.name}^zeta")
        self.flow = flow
        self.zeta = zeta

    def _time(self, t: float) -> float:
        return self.flow.check_time(float(self.zeta(t)))

    def _forward(self, t, points):
        return self.flow._forward(self._time(t), points)

    def _inverse(self, t, points):
        return self.flow._inverse(self._time(t), points)


class ConcatenatedFlow(FlowMap):
    """
    Identity-based pieces on consecutive intervals run one after another:
    on the k-th interval the isotopy is piece_k(t) o piece_{k-1}(end) o ... o piece_0(end).
    """

    def __init__(self, pieces: Sequence[FlowMap], hamiltonian: Optional[Hamiltonian] = None, name=None):
        for left, right in zip(pieces[:-1], pieces[1:]):
            _same_chart(left, right)
            if abs(left.interval[1] - right.interval[0]) > TIME_SLACK:
                raise TimeRangeError(f"{left.name} ends at {left.interval[1]}, {right.name} starts at {right.interval[0]}")
        super().__init__(
            pieces[0].chart, (pieces[0].interval[0], pieces[-1].interval[1]), hamiltonian, name or "concat"
        )
        self.pieces = list(pieces)

    def _piece(self, t: float) -> int:
        for k, piece in enumerate(self.pieces):
            if t <= piece.interval[1]:
                return k
        return len(self.pieces) - 1

    def _forward(self, t, points):
        k = self._piece(t)
        x, total = points, np.zeros(len(points))
        for piece in self.pieces[:k]:
            x, h = piece._forward(piece.interval[1], x)
            total = total + h
        x, h = self.pieces[k]._forward(max(t, self.pieces[k].interval[0]), x)
        return x, total + h

    def _inverse(self, t, points):
        k = self._piece(t)
        y, total = self.pieces[k]._inverse(max(t, self.pieces[k].interval[0]), points)
        for piece in reversed(self.pieces[:k]):
            y, g = piece._inverse(piece.interval[1], y)
            total = total + g
        return y, total


class PiecewiseFlow(FlowMap):
    """
    Isotopies on consecutive intervals that already chain: each piece starts
    where the previous one ends, so on the k-th interval the isotopy is piece_k itself.
    """

    def __init__(self, pieces: Sequence[FlowMap], hamiltonian: Optional[Hamiltonian] = None, name=None):
        for left, right in zip(pieces[:-1], pieces[1:]):
            _same_chart(left, right)
            if abs(left.interval[1] - right.interval[0]) > TIME_SLACK:
                raise TimeRangeError(f"{left.name} ends at {left.interval[1]}, {right.name} starts at {right.interval[0]}")
        super().__init__(
            pieces[0].chart, (pieces[0].interval[0], pieces[-1].interval[1]), hamiltonian, name or "piecewise"
        )
        self.pieces = list(pieces)

    @property
    def is_identity_based(self):
        return self.pieces[0].is_identity_based

    def _piece(self, t: float) -> FlowMap:
        for piece in self.pieces:
            if t <= piece.interval[1]:
                return piece
        return self.pieces[-1]

    def _forward(self, t, points):
        piece = self._piece(t)
        return piece._forward(max(t, piece.interval[0]), points)

    def _inverse(self, t, points):
        piece = self._piece(t)
        return piece._inverse(max(t, piece.interval[0]), points)


@dataclass(frozen=True, eq=False)
class TimeSliceMap:
    """The fixed map phi_s of a flow, usable as a base map or automorphism."""

    flow: FlowMap
    s: float

    @property
    def chart(self) -> ContactChart:
        return self.flow.chart

    def apply(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.flow.evaluate(self.s, points)

    def apply_inverse(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.flow.inverse_evaluate(self.s, points)


# ==========================================
# Conformal factors and verification
# ==========================================


@dataclass(frozen=True, eq=False)
class ConformalFactor:
    """h_t(x) of a flow map, evaluated on the flow's own time grid."""

    flow: FlowMap

    def __call__(self, t: float, points: np.ndarray) -> np.ndarray:
        return self.flow.conformal(t, points)


def conformal_factor(H: Hamiltonian, flow: FlowMap) -> ConformalFactor:
    """
    The conformal factor of the isotopy generated by H.

    Raises:
        PairingError: The flow was not generated from H
    """
    if flow.hamiltonian is not H:
        raise PairingError(f"{flow.name} was not generated by {H.name}")
    return ConformalFactor(flow)


def pullback_residual(
    flow: FlowMap, h: Optional[ConformalFactor], t: float, samples: np.ndarray, step: Optional[float] = None
) -> float:
    """
    sup over samples and coordinate probes of |(phi_t^* alpha)(v) - e^{h_t} alpha(v)|,
    with phi_t^* alpha from a finite-difference Jacobian.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise EmptySampleError("pullback residual needs at least one sample point")
    samples = flow.chart._rows(samples)
    t = flow.check_time(t)
    factor = (h or ConformalFactor(flow))(t, samples)
    images = flow._forward(t, samples)[0]
    jac = differences.jacobian(lambda p: flow._forward(t, p)[0], samples, step)
    pulled = np.einsum("ni,nij->nj", flow.chart.alpha(images), jac)
    expected = np.exp(factor)[:, None] * flow.chart.alpha(samples)
    return float(np.max(np.abs(pulled - expected)))


def snapshot_rows(flow: FlowMap, points: np.ndarray, times: Sequence[float]) -> list[dict[str, float]]:
    """Rows (t, input coordinates, output coordinates, h) for CSV export."""
    names = coordinate_names(flow.chart)
    images, factors = flow.trajectory(points, times)
    rows = []
    for k, t in enumerate(times):
        out = flow.chart.wrap(images[k])
        for n in range(len(points)):
            row = {"t": float(t)}
            row.update({f"in_{c}": float(v) for c, v in zip(names, points[n])})
            row.update({f"out_{c}": float(v) for c, v in zip(names, out[n])})
            row["h"] = float(factors[k, n])
            rows.append(row)
    return rows


def coordinate_names(chart: ContactChart) -> list[str]:
    if chart.is_torus:
        return ["x", "y", "z"]
    return [f"{axis}{i}" for i in range(1, chart.n + 1) for axis in ("x", "y")] + ["z"]
