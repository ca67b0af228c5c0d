"""
Fourth-order centred finite differences.

Stencil: f'(x) = (-f(x + 2h) + 8 f(x + h) - 8 f(x - h) + f(x - 2h)) / (12 h) + O(h^4).
All stencil points of all coordinates are evaluated in one batched call.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from contactflow.core.config import settings

_OFFSETS = np.array([2.0, 1.0, -1.0, -2.0])
_WEIGHTS = np.array([-1.0, 8.0, -8.0, 1.0]) / 12.0


def _stencil(points: np.ndarray, step: float) -> np.ndarray:
    """Stencil points with shape (dim, 4, N, dim)."""
    n, dim = points.shape
    shifts = np.eye(dim)[:, None, None, :] * (_OFFSETS[None, :, None, None] * step)
    return points[None, None, :, :] + shifts


def gradient(
    fn: Callable[[np.ndarray], np.ndarray], points: np.ndarray, step: float | None = None
) -> np.ndarray:
    """
    Gradient of a scalar field.

    Args:
        fn: Maps (M, dim) points to (M,) values
        points: Evaluation points, shape (N, dim)
        step: Difference step in coordinate units

    Returns:
        Array of shape (N, dim)
    """
    h = step or settings.FD_STEP
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, dim = points.shape
    values = np.asarray(fn(_stencil(points, h).reshape(-1, dim))).reshape(dim, 4, n)
    return np.einsum("k,dkn->nd", _WEIGHTS, values) / h


def jacobian(
    fn: Callable[[np.ndarray], np.ndarray], points: np.ndarray, step: float | None = None
) -> np.ndarray:
    """
    Jacobian of a point map.

    Returns:
        Array J of shape (N, out_dim, dim) with J[n, i, j] = d fn_i / d x_j at points[n]
    """
    h = step or settings.FD_STEP
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, dim = points.shape
    images = np.asarray(fn(_stencil(points, h).reshape(-1, dim)))
    images = images.reshape(dim, 4, n, -1)
    return np.einsum("k,dkni->nid", _WEIGHTS, images) / h


def time_derivative(
    fn: Callable[[np.ndarray], np.ndarray], times: np.ndarray, step: float | None = None
) -> np.ndarray:
    """
    Derivative in a scalar parameter, evaluated per entry of `times`.

    `fn` receives a flat array of 4 * len(times) parameter values (stencil-major)
    and returns one row per value.
    """
    h = step or settings.FD_STEP
    times = np.atleast_1d(np.asarray(times, dtype=float))
    shifted = (times[None, :] + _OFFSETS[:, None] * h).reshape(-1)
    values = np.asarray(fn(shifted))
    values = values.reshape((4, times.size) + values.shape[1:])
    return np.tensordot(_WEIGHTS, values, axes=(0, 0)) / h
