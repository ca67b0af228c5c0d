"""
Non-smooth gallery schemas.
Certificate rows, truncation diagnostics and the homeomorphism and conjugacy reports.
"""

from typing import Optional

from pydantic import BaseModel, Field


class CertificateRow(BaseModel):
    """Displacement quotient at the radius pair (s_k, s_k')."""

    k: int
    s_k: float
    s_k_prime: float
    quotient: float
    bound: float  # s_k^(-delta)
    chord_bound: float  # (s_k + s_k') / (s_k - s_k')
    gap_ok: bool  # s_k - s_k' < s_k^(1 + delta)
    rel_error: float
    passed: bool


class LipschitzCertificate(BaseModel):
    exponent: float
    delta: float
    rows: list[CertificateRow] = Field(default_factory=list)
    excluded: list[int] = Field(default_factory=list)
    smallest_usable: Optional[float] = None
    monotone: bool = True

    @property
    def passed(self) -> bool:
        return self.monotone and all(row.passed for row in self.rows)


class TruncationPair(BaseModel):
    """Distances between the truncations H_j and H_k, j < k."""

    j: int
    k: int
    hamiltonian_gap: float
    hamiltonian_bound: float
    radial_field_gap: float
    flow_gap: float
    stabilized_gap: float
    stabilized_points: int


class TruncationIndex(BaseModel):
    """Per-truncation quantities."""

    j: int
    epsilon: float
    invariance_radius: float
    radius_ratio_max: float
    radius_ratio_min: float
    conformal_on_invariant_slab: float


class TruncationDiagnostics(BaseModel):
    growth_constant: float  # b
    invariance_radius: float  # u
    indices: list[TruncationIndex] = Field(default_factory=list)
    pairs: list[TruncationPair] = Field(default_factory=list)
    radii_monotone: bool = True
    seed: int = 0


class AxisReport(BaseModel):
    """The z-axis is invariant and moves by the one-dimensional flow of eta(z) I(0)."""

    j: int
    planar_drift: float
    ode_gap: float
    limit_gap: float
    axis_speed: float
    limit_axis_speed: float


class HomeomorphismReport(BaseModel):
    samples: int
    injective: bool
    collisions: int
    min_separation_ratio: float
    surjectivity_residual: float
    round_trip_residual: float
    radius_change: float


class ConjugacyReport(BaseModel):
    samples: int
    times: int
    definitional_gap: float  # max |H - F o phi|
    conjugacy_residual: float
    gradient_near_axis: float
    ellipse_ratio: float
    seed: int = 0
