"""
Exception hierarchy for the toolkit.
Every failure clause of the public operations maps to one class here.
"""

from __future__ import annotations

from typing import Any, Optional

import numpy as np


class ContactFlowError(Exception):
    """Base class for all toolkit errors."""


# ==========================================
# Charts and evaluation ranges
# ==========================================


class ChartError(ContactFlowError, ValueError):
    """Invalid chart description (degenerate box, n = 0, unknown kind)."""


class DomainError(ChartError):
    """A point lies outside the chart domain."""

    def __init__(self, message: str, points: Optional[np.ndarray] = None):
        super().__init__(message)
        self.points = points


class ChartMismatchError(ContactFlowError, ValueError):
    """Two objects that must share a chart do not."""


class TimeRangeError(ContactFlowError, ValueError):
    """Evaluation time outside the time interval of a Hamiltonian or flow."""


# ==========================================
# Flows and systems
# ==========================================


class FlowEscapeError(ContactFlowError):
    """A trajectory left the chart domain during integration."""

    def __init__(self, point: np.ndarray, time: float):
        super().__init__(f"trajectory left the chart domain at t={time:.6g}, point={np.round(point, 6).tolist()}")
        self.point = point
        self.time = time


class IntegratorError(ContactFlowError, ValueError):
    """Invalid integrator settings such as a nonpositive step."""


class PairingError(ContactFlowError, ValueError):
    """A flow and a Hamiltonian that do not belong together."""


class EmptySampleError(ContactFlowError, ValueError):
    """An operation received an empty sample set."""


class SupportLeakError(ContactFlowError, ValueError):
    """A Hamiltonian's support leaves the region where a construction is valid."""


# ==========================================
# Metrics
# ==========================================


class GridCoverageError(ContactFlowError):
    """The evaluation grid does not cover a Hamiltonian's support."""


class CandidateError(ContactFlowError, ValueError):
    """Energy estimation received no usable candidate."""

    def __init__(self, message: str, mismatches: Optional[dict[str, float]] = None):
        super().__init__(message)
        self.mismatches = mismatches or {}


# ==========================================
# Reparameterization and regularization
# ==========================================


class ReparamError(ContactFlowError, ValueError):
    """Invalid reparameterization function or interval."""


class RegularityError(ReparamError):
    """An isotopy is stationary at some sampled time."""

    def __init__(self, time: float, norm: float):
        super().__init__(f"||G_t|| = {norm:.3e} vanishes at t={time:.6g}")
        self.time = time
        self.norm = norm


class FlatteningError(ReparamError):
    """The smoothing template cannot reach the requested epsilon."""

    def __init__(self, requested: float, achievable: float):
        super().__init__(f"epsilon {requested:.3e} below what the template reaches ({achievable:.3e})")
        self.requested = requested
        self.achievable = achievable


class RegularizationError(ContactFlowError):
    """No parameter in the search box gives a regular difference isotopy."""

    def __init__(self, best_candidate: Any, best_margin: float):
        super().__init__(f"no regular candidate; best margin {best_margin:.3e} at {best_candidate}")
        self.best_candidate = best_candidate
        self.best_margin = best_margin


# ==========================================
# Pipelines and certificates
# ==========================================


class StageBoundError(ContactFlowError):
    """A measured pipeline quantity violates its required bound."""

    def __init__(self, stage: int, quantity: str, measured: float, required: float):
        super().__init__(f"stage {stage}: {quantity} = {measured:.3e} violates bound {required:.3e}")
        self.stage = stage
        self.quantity = quantity
        self.measured = measured
        self.required = required
        self.trace = None


class PipelineError(ContactFlowError, ValueError):
    """Invalid pipeline input: empty or mismatched systems, unknown mode, non-basic input in strict mode."""


class ThinningError(ContactFlowError):
    """Subsequence thinning ran out of input systems."""


class GalleryError(ContactFlowError, ValueError):
    """Invalid profile, cutoff or certificate parameters for the non-smooth constructions."""


class CertificateRangeError(ContactFlowError):
    """Requested radii are below what floating point resolves."""

    def __init__(self, message: str, smallest_usable: float):
        super().__init__(message)
        self.smallest_usable = smallest_usable


# ==========================================
# Configuration and reports
# ==========================================


class ConfigError(ContactFlowError):
    """Malformed or unresolvable experiment configuration."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        location = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{location}")
        self.line = line
        self.column = column


class ReportError(ContactFlowError):
    """A report could not be written."""

    def __init__(self, message: str, path: str):
        super().__init__(f"{message}: {path}")
        self.path = path
