"""
Smooth building blocks shared by the Hamiltonian families.

The C-infinity step S(u) = f(u) / (f(u) + f(1 - u)) with f(u) = exp(-1/u) is the
single source of smoothness: bumps, cutoffs, boundary-flat templates and the
truncation caps of the non-smooth gallery are all assembled from it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from contactflow.core.config import settings

TWO_PI = 2.0 * np.pi


def _edge(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """f(u) = exp(-1/u) for u > 0 and its derivative f(u) / u**2."""
    u = np.asarray(u, dtype=float)
    positive = u > 0
    safe = np.where(positive, u, 1.0)
    value = np.where(positive, np.exp(-1.0 / safe), 0.0)
    return value, np.where(positive, value / safe**2, 0.0)


def smooth_step(u: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for u <= 0, 1 for u >= 1, S(u) + S(1 - u) = 1."""
    a, _ = _edge(u)
    b, _ = _edge(1.0 - np.asarray(u, dtype=float))
    return a / (a + b)


def smooth_step_derivative(u: np.ndarray) -> np.ndarray:
    a, da = _edge(u)
    b, db = _edge(1.0 - np.asarray(u, dtype=float))
    return (da * b + a * db) / (a + b) ** 2


@dataclass(frozen=True)
class StepIntegral:
    """
    Tabulated antiderivative Sint(u) = integral of S over [0, u].

    Outside [0, 1] the table is extended exactly: 0 below, u - 1/2 above,
    since the integral of S over [0, 1] is 1/2 by symmetry.
    """

    points: int
    _spline: CubicSpline = field(repr=False)

    @classmethod
    def build(cls, points: int) -> "StepIntegral":
        u = np.linspace(0.0, 1.0, points)
        return cls(points=points, _spline=CubicSpline(u, smooth_step(u)).antiderivative())

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        inside = self._spline(np.clip(u, 0.0, 1.0))
        return np.where(u <= 0.0, 0.0, np.where(u >= 1.0, u - 0.5, inside))


@lru_cache(maxsize=4)
def step_integral(points: int | None = None) -> StepIntegral:
    """Shared step-integral table, built once per resolution."""
    return StepIntegral.build(points or settings.PROFILE_TABLE_POINTS)


def cutoff(x: np.ndarray, inner: float, outer: float) -> np.ndarray:
    """Even cutoff: 1 for |x| <= inner, 0 for |x| >= outer."""
    return smooth_step((outer - np.abs(x)) / (outer - inner))


def cutoff_derivative(x: np.ndarray, inner: float, outer: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return -np.sign(x) * smooth_step_derivative((outer - np.abs(x)) / (outer - inner)) / (outer - inner)


def radial_bump(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Bump in the squared normalised radius s = |x - c|^2 / R^2.

    Returns:
        (b, db/ds) with b = exp(1 - 1/(1 - s)) on s < 1, b(0) = 1, zero beyond.
    """
    s = np.asarray(s, dtype=float)
    inside = s < 1.0
    gap = np.where(inside, 1.0 - s, 1.0)
    value = np.where(inside, np.exp(1.0 - 1.0 / gap), 0.0)
    return value, np.where(inside, -value / gap**2, 0.0)


@dataclass(frozen=True)
class TimeProfile:
    """
    Time factor T(t) = offset + slope * t + sum_k (a_k cos 2 pi k t + b_k sin 2 pi k t).

    Closed-form values, derivatives and integrals make the zonal, basic and
    bump families exactly integrable in time.
    """

    offset: float = 1.0
    slope: float = 0.0
    cos_coeffs: tuple[float, ...] = ()
    sin_coeffs: tuple[float, ...] = ()

    def value(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = self.offset + self.slope * t
        for k, (a, b) in enumerate(self._pairs(), start=1):
            out = out + a * np.cos(TWO_PI * k * t) + b * np.sin(TWO_PI * k * t)
        return out

    def derivative(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.full_like(t, self.slope)
        for k, (a, b) in enumerate(self._pairs(), start=1):
            w = TWO_PI * k
            out = out - a * w * np.sin(w * t) + b * w * np.cos(w * t)
        return out

    def integral(self, t0: float, t: np.ndarray) -> np.ndarray:
        """Integral of T over [t0, t]."""
        return self._antiderivative(np.asarray(t, dtype=float)) - self._antiderivative(np.asarray(t0, dtype=float))

    def _antiderivative(self, t: np.ndarray) -> np.ndarray:
        out = self.offset * t + 0.5 * self.slope * t**2
        for k, (a, b) in enumerate(self._pairs(), start=1):
            w = TWO_PI * k
            out = out + a * np.sin(w * t) / w - b * np.cos(w * t) / w
        return out

    def _pairs(self) -> list[tuple[float, float]]:
        size = max(len(self.cos_coeffs), len(self.sin_coeffs))
        cos = list(self.cos_coeffs) + [0.0] * (size - len(self.cos_coeffs))
        sin = list(self.sin_coeffs) + [0.0] * (size - len(self.sin_coeffs))
        return list(zip(cos, sin))

    @property
    def is_periodic(self) -> bool:
        return self.slope == 0.0

    @property
    def mean(self) -> float:
        """Mean over one period (meaningful when the slope vanishes)."""
        return self.offset
