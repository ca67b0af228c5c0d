"""
Contact dynamical systems (Phi, H, h) and their group algebra.

Every operation is realised twice: on Hamiltonians, as lazily evaluated
composite expressions that call the constituent flows, and on flows, as
pointwise compositions. `cross_check` integrates a composite Hamiltonian
directly and compares the two.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from contactflow.analysis import metrics
from contactflow.core.errors import ChartError, ChartMismatchError, PairingError, TimeRangeError
from contactflow.core.logging import get_logger
from contactflow.dynamics import differences
from contactflow.dynamics.builtins import zero_hamiltonian
from contactflow.dynamics.charts import ContactChart, FormScale
from contactflow.dynamics.flow import (
    ClosedFormFlow,
    ComposedFlow,
    ConformalFactor,
    ConjugatedFlow,
    FlowMap,
    InverseFlow,
    LeftTranslatedFlow,
    PointMap,
    StationaryFlow,
    TimeSliceMap,
    flow_of,
    integrate_flow,
)
from contactflow.dynamics.hamfield import Hamiltonian, difference

logger = get_logger(__name__)


class Provenance(str, Enum):
    DIRECT = "direct-integration"
    ALGEBRAIC = "algebraic-composition"


@dataclass(frozen=True, eq=False)
class ContactDynamicalSystem:
    """The triple (Phi, H, h); the conformal factor is read off the flow."""

    hamiltonian: Hamiltonian
    flow: FlowMap
    provenance: Provenance = Provenance.DIRECT
    name: str = "A"

    @property
    def chart(self) -> ContactChart:
        return self.hamiltonian.chart

    @property
    def interval(self) -> tuple[float, float]:
        return self.hamiltonian.interval

    @property
    def conformal_factor(self) -> ConformalFactor:
        return ConformalFactor(self.flow)

    def time_one(self, points: np.ndarray) -> np.ndarray:
        """The end map Phi_b at the points."""
        return self.flow(self.interval[1], points)

    @classmethod
    def generate(cls, H: Hamiltonian, step: Optional[float] = None, name: Optional[str] = None) -> "ContactDynamicalSystem":
        """The identity-based system of H, closed form when available."""
        return cls(H, flow_of(H, step), Provenance.DIRECT, name or H.name)


def identity_system(chart: ContactChart, interval: tuple[float, float] = (0.0, 1.0)) -> ContactDynamicalSystem:
    H = zero_hamiltonian(chart, interval)
    return ContactDynamicalSystem(H, StationaryFlow(chart, interval, hamiltonian=H), Provenance.DIRECT, "id")


# ==========================================
# Automorphisms
# ==========================================


MapFn = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True, eq=False)
class Automorphism:
    """
    A contact map psi with psi^* alpha = e^g alpha, given by forward and inverse
    evaluators that return (images, g at the input points).
    """

    chart: ContactChart
    forward: MapFn
    backward: MapFn
    name: str = "psi"
    smooth: bool = True

    def apply(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.forward(self.chart._rows(points))

    def apply_inverse(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.backward(self.chart._rows(points))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.apply(points)[0]

    def conformal(self, points: np.ndarray) -> np.ndarray:
        return self.apply(points)[1]

    def inverted(self) -> "Automorphism":
        return Automorphism(self.chart, self.backward, self.forward, f"{self.name}^-1", self.smooth)

    # ------------------------------------------
    # Constructors
    # ------------------------------------------

    @classmethod
    def identity(cls, chart: ContactChart) -> "Automorphism":
        def same(points):
            return points.copy(), np.zeros(len(points))

        return cls(chart, same, same, "id")

    @classmethod
    def z_translation(cls, chart: ContactChart, shift: float) -> "Automorphism":
        """(x, y, z) -> (x, y, z + shift) on an unscaled Darboux chart (strict)."""
        _require_unscaled_darboux(chart, "z-translation")

        def move(points, sign):
            out = points.copy()
            out[:, -1] += sign * shift
            return out, np.zeros(len(points))

        return cls(chart, lambda p: move(p, 1.0), lambda p: move(p, -1.0), f"ztrans({shift:g})")

    @classmethod
    def heisenberg(cls, chart: ContactChart, a: Sequence[float], b: Sequence[float]) -> "Automorphism":
        """(x, y, z) -> (x + a, y + b, z + (b.x - a.y)/2), a strict contactomorphism."""
        _require_unscaled_darboux(chart, "Heisenberg translation")
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        if a.shape != (chart.n,) or b.shape != (chart.n,):
            raise ChartError(f"Heisenberg translation needs {chart.n} components per direction")

        def move(points, sign):
            out = points.copy()
            x, y = points[:, 0:-1:2], points[:, 1:-1:2]
            out[:, 0:-1:2] += sign * a
            out[:, 1:-1:2] += sign * b
            out[:, -1] += sign * 0.5 * (x @ b - y @ a)
            return out, np.zeros(len(points))

        return cls(chart, lambda p: move(p, 1.0), lambda p: move(p, -1.0), "heisenberg")

    @classmethod
    def scaling(cls, chart: ContactChart, lam: float) -> "Automorphism":
        """(x, y, z) -> (lam x, lam y, lam^2 z) with g = log lam^2."""
        _require_unscaled_darboux(chart, "contact scaling")
        if lam <= 0:
            raise ChartError(f"scaling factor must be positive, got {lam}")
        weights = np.array([lam] * (chart.dim - 1) + [lam**2])
        g = 2.0 * np.log(lam)
        return cls(
            chart,
            lambda p: (p * weights, np.full(len(p), g)),
            lambda p: (p / weights, np.full(len(p), -g)),
            f"scale({lam:g})",
        )

    @classmethod
    def torus_translation(cls, chart: ContactChart, dx: float, dy: float) -> "Automorphism":
        """Translation in x and y on T^3 (strict)."""
        if not chart.is_torus or chart.form_scale is not None:
            raise ChartError("torus translations need the unscaled T^3 chart")
        shift = np.array([dx, dy, 0.0])

        def move(points, sign):
            return points + sign * shift, np.zeros(len(points))

        return cls(chart, lambda p: move(p, 1.0), lambda p: move(p, -1.0), "translate")

    @classmethod
    def time_map(cls, system: ContactDynamicalSystem, s: float) -> "Automorphism":
        """The time-s map of a system."""
        slice_ = TimeSliceMap(system.flow, s)
        return cls(system.chart, slice_.apply, slice_.apply_inverse, f"{system.name}@{s:g}")


def _require_unscaled_darboux(chart: ContactChart, what: str) -> None:
    if chart.is_torus or chart.form_scale is not None:
        raise ChartError(f"{what} is defined on unscaled Darboux charts")


def reeb_direction_residual(psi: PointMap, points: np.ndarray) -> float:
    """max |alpha(d psi(R)) - e^g| by finite-difference Jacobians."""
    chart = psi.chart
    points = chart._rows(points)
    images, g = psi.apply(points)
    jac = differences.jacobian(lambda p: psi.apply(p)[0], points)
    pushed = np.einsum("nij,nj->ni", jac, chart.reeb(points))
    return float(np.max(np.abs(np.einsum("nd,nd->n", chart.alpha(images), pushed) - np.exp(g))))


# ==========================================
# Composite Hamiltonians
# ==========================================


class CompositeHamiltonian(Hamiltonian):
    """
    Hamiltonian defined by a group-law expression. It is evaluated lazily
    through the constituent flows; its own identity-based flow is known
    algebraically and exposed as its closed form.
    """

    kind = "composite"

    def __init__(self, chart, interval, name, constituents: Sequence[Hamiltonian]):
        super().__init__(chart, interval, None, name)
        self.constituents = list(constituents)
        self.known_flow: Optional[FlowMap] = None

    @property
    def breakpoints(self):
        return tuple(sorted(set().union(*(H.breakpoints for H in self.constituents))))

    def closed_form_flow(self):
        if self.known_flow is None:
            return None
        return self.known_flow._forward, self.known_flow._inverse


class ComposedHamiltonian(CompositeHamiltonian):
    """(H # F)_t = H_t + (e^{h_t} F_t) o (phi_H^t)^{-1}."""

    def __init__(self, A: ContactDynamicalSystem, B: ContactDynamicalSystem):
        super().__init__(A.chart, A.interval, f"({A.name} # {B.name})", [A.hamiltonian, B.hamiltonian])
        self.A, self.B = A, B

    def _evaluate(self, t, points):
        y, g_inv = self.A.flow._inverse(t, points)
        return self.A.hamiltonian._evaluate(t, points) + np.exp(-g_inv) * self.B.hamiltonian._evaluate(t, y)


class InvertedHamiltonian(CompositeHamiltonian):
    """-e^{-h_t} (H_t o phi_t)."""

    def __init__(self, A: ContactDynamicalSystem):
        super().__init__(A.chart, A.interval, f"inv({A.name})", [A.hamiltonian])
        self.A = A

    def _evaluate(self, t, points):
        y, h = self.A.flow._forward(t, points)
        return -np.exp(-h) * self.A.hamiltonian._evaluate(t, y)


class ConjugatedHamiltonian(CompositeHamiltonian):
    """e^{-g} (H_t o psi)."""

    def __init__(self, A: ContactDynamicalSystem, psi: PointMap, label: str = "psi"):
        super().__init__(A.chart, A.interval, f"conj({A.name}, {label})", [A.hamiltonian])
        self.A, self.psi = A, psi

    def _evaluate(self, t, points):
        y, g = self.psi.apply(points)
        return np.exp(-g) * self.A.hamiltonian._evaluate(t, y)


class DifferenceHamiltonian(CompositeHamiltonian):
    """e^{-h_t} ((F_t - H_t) o phi_H^t), generating Phi_H^{-1} o Phi_F."""

    def __init__(self, A: ContactDynamicalSystem, B: ContactDynamicalSystem):
        super().__init__(A.chart, A.interval, f"({A.name}^-1 {B.name})", [A.hamiltonian, B.hamiltonian])
        self.A, self.B = A, B

    def _evaluate(self, t, points):
        y, h = self.A.flow._forward(t, points)
        return np.exp(-h) * (self.B.hamiltonian._evaluate(t, y) - self.A.hamiltonian._evaluate(t, y))


class PushedHamiltonian(CompositeHamiltonian):
    """(e^g H_t) o psi^{-1}, generating psi o phi_t o psi^{-1} from the identity."""

    def __init__(self, A: ContactDynamicalSystem, psi: PointMap, label: str = "psi"):
        super().__init__(A.chart, A.interval, f"push({A.name}, {label})", [A.hamiltonian])
        self.A, self.psi = A, psi

    def _evaluate(self, t, points):
        y, g_inv = self.psi.apply_inverse(points)
        return np.exp(-g_inv) * self.A.hamiltonian._evaluate(t, y)


@dataclass(frozen=True, eq=False)
class _InversePointMap:
    psi: PointMap
    chart: ContactChart = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "chart", self.psi.chart)

    def apply(self, points):
        return self.psi.apply_inverse(points)

    def apply_inverse(self, points):
        return self.psi.apply(points)


# ==========================================
# Group operations
# ==========================================


def _require_compatible(A: ContactDynamicalSystem, B: ContactDynamicalSystem) -> None:
    if not A.chart.same_as(B.chart):
        raise ChartMismatchError(f"{A.name} and {B.name} live on different charts")
    if A.interval != B.interval:
        raise TimeRangeError(f"{A.name} and {B.name} have different time intervals")


def _require_identity_based(*systems: ContactDynamicalSystem) -> None:
    for system in systems:
        if not system.flow.is_identity_based:
            raise PairingError(f"{system.name} is not based at the identity")


def _algebraic(H: CompositeHamiltonian, flow: FlowMap, name: str) -> ContactDynamicalSystem:
    flow.hamiltonian = H
    H.known_flow = flow
    return ContactDynamicalSystem(H, flow, Provenance.ALGEBRAIC, name)


def compose(A: ContactDynamicalSystem, B: ContactDynamicalSystem) -> ContactDynamicalSystem:
    """The system of Phi_H o Phi_F with Hamiltonian H # F."""
    _require_compatible(A, B)
    _require_identity_based(A, B)
    H = ComposedHamiltonian(A, B)
    return _algebraic(H, ComposedFlow(A.flow, B.flow), H.name)


def invert(A: ContactDynamicalSystem) -> ContactDynamicalSystem:
    """The system of Phi_H^{-1}."""
    _require_identity_based(A)
    H = InvertedHamiltonian(A)
    return _algebraic(H, InverseFlow(A.flow), H.name)


def conjugate(A: ContactDynamicalSystem, psi: Automorphism | PointMap) -> ContactDynamicalSystem:
    """The system of psi^{-1} o Phi o psi with Hamiltonian e^{-g} (H o psi)."""
    if not A.chart.same_as(psi.chart):
        raise ChartMismatchError(f"{A.name} and the automorphism live on different charts")
    label = getattr(psi, "name", "psi")
    H = ConjugatedHamiltonian(A, psi, label)
    return _algebraic(H, ConjugatedFlow(A.flow, psi), H.name)


def group_difference(A: ContactDynamicalSystem, B: ContactDynamicalSystem) -> ContactDynamicalSystem:
    """The system of Phi_H^{-1} o Phi_F, realised without forming inv(A) first."""
    _require_compatible(A, B)
    _require_identity_based(A, B)
    H = DifferenceHamiltonian(A, B)
    return _algebraic(H, ComposedFlow(InverseFlow(A.flow), B.flow), H.name)


def push_forward(A: ContactDynamicalSystem, psi: Automorphism | PointMap) -> ContactDynamicalSystem:
    """
    The isotopy psi o Phi, generated by (e^g H) o psi^{-1} and based at psi.
    Its conformal factor is g o phi_t + h_t.
    """
    if not A.chart.same_as(psi.chart):
        raise ChartMismatchError(f"{A.name} and the map live on different charts")
    label = getattr(psi, "name", "psi")
    H = PushedHamiltonian(A, psi, label)
    H.known_flow = ConjugatedFlow(A.flow, _InversePointMap(psi), H)
    flow = LeftTranslatedFlow(psi, A.flow, H)
    return ContactDynamicalSystem(H, flow, Provenance.ALGEBRAIC, H.name)


# ==========================================
# Change of contact form
# ==========================================


class FormRescaledHamiltonian(Hamiltonian):
    """e^f H, the Hamiltonian of the same isotopy for the form e^f alpha."""

    def __init__(self, H: Hamiltonian, chart: ContactChart):
        super().__init__(chart, H.interval, H.support, f"e^f {H.name}")
        self.base = H
        self.scale = chart.form_scale

    def _evaluate(self, t, points):
        return np.exp(self.scale.value(points)) * self.base._evaluate(t, points)

    def _gradient(self, t, points):
        weight = np.exp(self.scale.value(points))[:, None]
        values = self.base._evaluate(t, points)[:, None]
        return weight * (self.base._gradient(t, points) + values * self.scale.gradient(points))

    @property
    def breakpoints(self):
        return self.base.breakpoints


def change_form(system: ContactDynamicalSystem, scale: FormScale) -> ContactDynamicalSystem:
    """
    Re-express a system for the form e^f alpha: (Phi, e^f H, h + f o Phi - f).
    """
    if system.chart.form_scale is not None:
        raise ChartError("change_form starts from an unscaled chart")
    chart = system.chart.with_form_scale(scale)
    H = FormRescaledHamiltonian(system.hamiltonian, chart)
    flow = system.flow

    def forward(t, points):
        y, h = flow._forward(t, points)
        return y, h + scale.value(y) - scale.value(points)

    def inverse(t, points):
        x, g = flow._inverse(t, points)
        return x, g + scale.value(x) - scale.value(points)

    rescaled = ClosedFormFlow(chart, flow.interval, forward, inverse, H, f"{flow.name}[e^f]")
    return ContactDynamicalSystem(H, rescaled, system.provenance, f"{system.name}[e^f]")


# ==========================================
# Cross-checks and diagnostics
# ==========================================


def cross_check(
    system: ContactDynamicalSystem, points: np.ndarray, times: Sequence[float], step: Optional[float] = None
) -> float:
    """
    sup over points and times of the distance between the system's flow and a
    direct RK4 integration of its Hamiltonian's field (identity-based systems).
    """
    direct = integrate_flow(system.hamiltonian.field(), step=step)
    direct_images, _ = direct.trajectory(points, times)
    own_images, _ = system.flow.trajectory(points, times)
    worst = 0.0
    for k in range(len(times)):
        worst = max(worst, float(np.max(system.chart.point_distance(direct_images[k], own_images[k]))))
    logger.info(f"Cross-check {system.name}: sup distance {worst:.3e}")
    return worst


def uniqueness_diagnostic(
    A: ContactDynamicalSystem,
    B: ContactDynamicalSystem,
    grid,
    knots: Sequence[float],
    points: np.ndarray,
) -> float:
    """
    Ratio of the C0 flow distance to the L(1,inf) Hamiltonian distance.
    Logged and returned as a diagnostic only.
    """
    flow_gap = metrics.c0_distance(A.flow, B.flow, points, knots, symmetric=False)
    ham_gap = metrics.ham_norm(
        difference(A.hamiltonian, B.hamiltonian), "L1inf", grid, knots=knots
    ).value
    ratio = flow_gap / ham_gap if ham_gap > 0 else float("inf") if flow_gap > 0 else 0.0
    logger.info(f"Uniqueness diagnostic {A.name} vs {B.name}: d={flow_gap:.3e}, |H-F|={ham_gap:.3e}, K={ratio:.3g}")
    return ratio
