"""
Closed-form Hamiltonian families addressable by name from experiment files.
"""

from __future__ import annotations

from typing import Any, Callable, Optional, Sequence

import numpy as np

from contactflow.core.errors import ChartError, ConfigError
from contactflow.dynamics.charts import ContactChart
from contactflow.dynamics.hamfield import Hamiltonian, PointFlow
from contactflow.dynamics.profiles import TWO_PI, TimeProfile, radial_bump


def _reeb_translation(chart: ContactChart, shift: Callable[[float], float]) -> tuple[PointFlow, PointFlow]:
    """Flow along Reeb orbits of the unscaled form by time shift(t)."""

    def move(points: np.ndarray, tau: float) -> np.ndarray:
        out = np.array(points, dtype=float)
        if chart.is_torus:
            z = out[:, 2]
            out[:, 0] += tau * np.cos(z)
            out[:, 1] -= tau * np.sin(z)
        else:
            out[:, -1] += tau
        return out

    def forward(t: float, points: np.ndarray):
        return move(points, shift(t)), np.zeros(len(points))

    def inverse(t: float, points: np.ndarray):
        return move(points, -shift(t)), np.zeros(len(points))

    return forward, inverse


class ConstantHamiltonian(Hamiltonian):
    """H = c. Its field is c R and its flow runs along Reeb orbits."""

    def __init__(self, chart: ContactChart, c: float, interval=(0.0, 1.0), name: Optional[str] = None):
        super().__init__(chart, interval, None, name or f"const({c:g})")
        self.c = float(c)

    def _evaluate(self, t, points):
        return np.full(len(points), self.c)

    def _gradient(self, t, points):
        return np.zeros_like(points)

    @property
    def is_autonomous(self):
        return True

    @property
    def is_basic(self):
        return True

    @property
    def flat_margin(self):
        return np.inf if self.c == 0.0 else None

    def closed_form_flow(self):
        if self.chart.form_scale is not None:
            return None
        a = self.interval[0]
        return _reeb_translation(self.chart, lambda t: self.c * (t - a))


def zero_hamiltonian(chart: ContactChart, interval=(0.0, 1.0)) -> ConstantHamiltonian:
    return ConstantHamiltonian(chart, 0.0, interval, name="0")


class TimeProfileHamiltonian(Hamiltonian):
    """F(t, x) = f(t): basic, strictly contact, a Reeb flow by the integral of f."""

    def __init__(self, chart: ContactChart, profile: TimeProfile, interval=(0.0, 1.0), name: str = "f(t)"):
        super().__init__(chart, interval, None, name)
        self.profile = profile

    def _evaluate(self, t, points):
        return np.full(len(points), float(self.profile.value(t)))

    def _gradient(self, t, points):
        return np.zeros_like(points)

    @property
    def is_basic(self):
        return True

    def closed_form_flow(self):
        if self.chart.form_scale is not None:
            return None
        a = self.interval[0]
        return _reeb_translation(self.chart, lambda t: float(self.profile.integral(a, t)))


class BumpHamiltonian(Hamiltonian):
    """
    H(t, x) = amplitude * T(t) * (1 + w.(x - c)) * b(|x - c|^2 / R^2).

    On T^3 the displacement x - c is wrapped into [-pi, pi), so the bump is
    periodic as long as R < pi.
    """

    def __init__(
        self,
        chart: ContactChart,
        center: Sequence[float],
        radius: float,
        amplitude: float = 1.0,
        tilt: Optional[Sequence[float]] = None,
        profile: Optional[TimeProfile] = None,
        interval=(0.0, 1.0),
        name: str = "bump",
    ):
        center = np.asarray(center, dtype=float)
        if center.shape != (chart.dim,):
            raise ChartError(f"bump center needs {chart.dim} coordinates")
        if radius <= 0 or (chart.is_torus and radius >= np.pi):
            raise ChartError(f"invalid bump radius {radius}")
        super().__init__(chart, interval, ball_support(chart, center, radius), name)
        self.center = center
        self.radius = float(radius)
        self.amplitude = float(amplitude)
        self.tilt = np.zeros(chart.dim) if tilt is None else np.asarray(tilt, dtype=float)
        self.profile = profile or TimeProfile()

    def _offset(self, points: np.ndarray) -> np.ndarray:
        d = points - self.center
        return np.mod(d + np.pi, TWO_PI) - np.pi if self.chart.is_torus else d

    def _evaluate(self, t, points):
        d = self._offset(points)
        b, _ = radial_bump(np.sum(d**2, axis=1) / self.radius**2)
        return self.amplitude * float(self.profile.value(t)) * (1.0 + d @ self.tilt) * b

    def _gradient(self, t, points):
        d = self._offset(points)
        b, db = radial_bump(np.sum(d**2, axis=1) / self.radius**2)
        poly = 1.0 + d @ self.tilt
        grad = self.tilt[None, :] * b[:, None] + (poly * db)[:, None] * (2.0 * d / self.radius**2)
        return self.amplitude * float(self.profile.value(t)) * grad

    @property
    def is_autonomous(self):
        return self.profile.slope == 0.0 and not self.profile.cos_coeffs and not self.profile.sin_coeffs


def ball_support(chart: ContactChart, center: np.ndarray, radius: float) -> Optional[np.ndarray]:
    """Polar bounding box of a coordinate ball on Darboux charts, checked against the chart box."""
    if chart.is_torus:
        return None
    rows = []
    for i in range(chart.n):
        rc = float(np.hypot(center[2 * i], center[2 * i + 1]))
        rows.append((max(0.0, rc - radius), rc + radius))
        rows.append((0.0, TWO_PI))
    rows.append((center[-1] - radius, center[-1] + radius))
    support = np.asarray(rows)
    box = chart.box
    if np.any(support[0:-1:2, 1] > box[0:-1:2, 1]) or support[-1, 0] < box[-1, 0] or support[-1, 1] > box[-1, 1]:
        raise ChartError(f"bump support {support.tolist()} leaves the chart box")
    return support


class ZonalHamiltonian(Hamiltonian):
    """
    Basic Hamiltonian on T^3 depending on t and z only:
    H = T(t) G(z), G(z) = g0 + sum_k (a_k cos kz + b_k sin kz).

    The flow keeps z fixed and translates (x, y) by
    I(t) (G cos z - G' sin z, -G sin z - G' cos z) with I the integral of T;
    the conformal factor vanishes.
    """

    def __init__(
        self,
        chart: ContactChart,
        g0: float = 1.0,
        cos_coeffs: Sequence[float] = (),
        sin_coeffs: Sequence[float] = (),
        profile: Optional[TimeProfile] = None,
        interval=(0.0, 1.0),
        name: str = "zonal",
    ):
        if not chart.is_torus:
            raise ChartError("zonal Hamiltonians live on T^3")
        super().__init__(chart, interval, None, name)
        self.g0 = float(g0)
        self.cos_coeffs = tuple(float(c) for c in cos_coeffs)
        self.sin_coeffs = tuple(float(c) for c in sin_coeffs)
        self.profile = profile or TimeProfile()

    def shape(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """G(z) and G'(z)."""
        g = np.full_like(z, self.g0)
        dg = np.zeros_like(z)
        for k, a in enumerate(self.cos_coeffs, start=1):
            g = g + a * np.cos(k * z)
            dg = dg - a * k * np.sin(k * z)
        for k, b in enumerate(self.sin_coeffs, start=1):
            g = g + b * np.sin(k * z)
            dg = dg + b * k * np.cos(k * z)
        return g, dg

    def _evaluate(self, t, points):
        return float(self.profile.value(t)) * self.shape(points[:, 2])[0]

    def _gradient(self, t, points):
        grad = np.zeros_like(points)
        grad[:, 2] = float(self.profile.value(t)) * self.shape(points[:, 2])[1]
        return grad

    @property
    def is_autonomous(self):
        return self.profile.slope == 0.0 and not self.profile.cos_coeffs and not self.profile.sin_coeffs

    @property
    def is_basic(self):
        return True

    def closed_form_flow(self):
        if self.chart.form_scale is not None:
            return None
        a = self.interval[0]

        def shift(t: float, points: np.ndarray, sign: float):
            z = points[:, 2]
            g, dg = self.shape(z)
            weight = sign * float(self.profile.integral(a, t))
            out = np.array(points, dtype=float)
            out[:, 0] += weight * (g * np.cos(z) - dg * np.sin(z))
            out[:, 1] += weight * (-g * np.sin(z) - dg * np.cos(z))
            return out, np.zeros(len(points))

        return (lambda t, p: shift(t, p, 1.0)), (lambda t, p: shift(t, p, -1.0))


class RotationHamiltonian(Hamiltonian):
    """
    H = T(t) * omega/2 * sum r_i^2 on a Darboux chart: every plane (x_i, y_i)
    turns by omega times the integral of T, z is fixed and the flow is strict.
    """

    def __init__(
        self,
        chart: ContactChart,
        omega: float = 1.0,
        profile: Optional[TimeProfile] = None,
        interval=(0.0, 1.0),
        name: str = "rotation",
    ):
        if chart.is_torus:
            raise ChartError("rotations live on Darboux charts")
        super().__init__(chart, interval, None, name)
        self.omega = float(omega)
        self.profile = profile or TimeProfile()

    def _evaluate(self, t, points):
        planar = points[:, :-1]
        return 0.5 * self.omega * float(self.profile.value(t)) * np.sum(planar**2, axis=1)

    def _gradient(self, t, points):
        grad = self.omega * float(self.profile.value(t)) * points
        grad[:, -1] = 0.0
        return grad

    @property
    def is_autonomous(self):
        return self.profile.slope == 0.0 and not self.profile.cos_coeffs and not self.profile.sin_coeffs

    @property
    def is_basic(self):
        return True

    def closed_form_flow(self):
        if self.chart.form_scale is not None:
            return None
        a = self.interval[0]

        def turn(t: float, points: np.ndarray, sign: float):
            angle = sign * self.omega * float(self.profile.integral(a, t))
            c, s = np.cos(angle), np.sin(angle)
            out = np.array(points, dtype=float)
            x, y = points[:, 0:-1:2], points[:, 1:-1:2]
            out[:, 0:-1:2] = c * x - s * y
            out[:, 1:-1:2] = s * x + c * y
            return out, np.zeros(len(points))

        return (lambda t, p: turn(t, p, 1.0)), (lambda t, p: turn(t, p, -1.0))


class TorusFourierHamiltonian(Hamiltonian):
    """
    H = T(t) (c0 + sum_m a_m cos(k_m . x + phase_m)) on T^3 with integer wave vectors.
    Generic modes are not basic and give nonzero conformal factors.
    """

    def __init__(
        self,
        chart: ContactChart,
        modes: Sequence[Sequence[float]],
        c0: float = 0.0,
        profile: Optional[TimeProfile] = None,
        interval=(0.0, 1.0),
        name: str = "fourier",
    ):
        if not chart.is_torus:
            raise ChartError("Fourier Hamiltonians live on T^3")
        super().__init__(chart, interval, None, name)
        modes = np.asarray(modes, dtype=float).reshape(-1, 5)
        if np.any(modes[:, :3] != np.round(modes[:, :3])):
            raise ChartError("wave vectors must be integral")
        self.waves = modes[:, :3]
        self.amplitudes = modes[:, 3]
        self.phases = modes[:, 4]
        self.c0 = float(c0)
        self.profile = profile or TimeProfile()

    def _evaluate(self, t, points):
        phase = points @ self.waves.T + self.phases
        return float(self.profile.value(t)) * (self.c0 + np.cos(phase) @ self.amplitudes)

    def _gradient(self, t, points):
        phase = points @ self.waves.T + self.phases
        return -float(self.profile.value(t)) * (np.sin(phase) * self.amplitudes) @ self.waves

    @property
    def is_autonomous(self):
        return self.profile.slope == 0.0 and not self.profile.cos_coeffs and not self.profile.sin_coeffs


# ==========================================
# Registry
# ==========================================


def _profile(params: dict[str, Any]) -> TimeProfile:
    spec = params.get("profile") or {}
    return TimeProfile(
        offset=float(spec.get("offset", 1.0)),
        slope=float(spec.get("slope", 0.0)),
        cos_coeffs=tuple(spec.get("cos", ())),
        sin_coeffs=tuple(spec.get("sin", ())),
    )


BUILTINS: dict[str, Callable[[ContactChart, dict[str, Any], tuple[float, float], str], Hamiltonian]] = {
    "constant": lambda chart, p, iv, name: ConstantHamiltonian(chart, p.get("c", 1.0), iv, name),
    "time_profile": lambda chart, p, iv, name: TimeProfileHamiltonian(chart, _profile(p), iv, name),
    "bump": lambda chart, p, iv, name: BumpHamiltonian(
        chart, p["center"], p["radius"], p.get("amplitude", 1.0), p.get("tilt"), _profile(p), iv, name
    ),
    "zonal": lambda chart, p, iv, name: ZonalHamiltonian(
        chart, p.get("g0", 1.0), p.get("cos", ()), p.get("sin", ()), _profile(p), iv, name
    ),
    "rotation": lambda chart, p, iv, name: RotationHamiltonian(chart, p.get("omega", 1.0), _profile(p), iv, name),
    "torus_fourier": lambda chart, p, iv, name: TorusFourierHamiltonian(
        chart, p["modes"], p.get("c0", 0.0), _profile(p), iv, name
    ),
}


def make_builtin(
    chart: ContactChart, builtin: str, params: dict[str, Any], interval=(0.0, 1.0), name: Optional[str] = None
) -> Hamiltonian:
    """Construct a builtin Hamiltonian from its config name and parameters."""
    if builtin not in BUILTINS:
        raise ConfigError(f"Unknown builtin Hamiltonian '{builtin}'")
    try:
        return BUILTINS[builtin](chart, params, tuple(interval), name or builtin)
    except KeyError as e:
        raise ConfigError(f"builtin '{builtin}' is missing parameter {e}") from e
