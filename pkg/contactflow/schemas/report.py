"""
Report schemas.
Norms, distances, energy estimates and the per-quantity result rows written by the runner.
"""

import hashlib
import json
from typing import Literal, Optional

from pydantic import BaseModel, Field, model_validator

NormKind = Literal["osc_mean_t", "L1inf", "Linf"]


class GridSpec(BaseModel):
    """Everything needed to rebuild an evaluation grid bit for bit."""

    chart_kind: str
    counts: list[int]
    box: list[tuple[float, float]]
    time_knots: int = 0
    seed: Optional[int] = None

    def digest(self) -> str:
        """sha256 of the canonical JSON encoding."""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class NormReport(BaseModel):
    """A Hamiltonian norm with the grid it was measured on."""

    kind: NormKind
    value: float = Field(ge=0.0)
    grid: GridSpec
    grid_hash: str


class MetricReport(BaseModel):
    """Components of the contact distance; total is their sum."""

    c0_component: float = Field(ge=0.0)
    conformal_component: float = Field(ge=0.0)
    hamiltonian_component: float = Field(ge=0.0)
    total: float = Field(ge=0.0)
    norm_kind: NormKind
    grid: GridSpec
    grid_hash: str

    @model_validator(mode="after")
    def _total_is_sum(self) -> "MetricReport":
        parts = self.c0_component + self.conformal_component + self.hamiltonian_component
        if abs(self.total - parts) > 1e-12 * max(1.0, parts):
            raise ValueError("total must equal the sum of the components")
        return self


class EnergyEstimate(BaseModel):
    """Upper bound for the contact energy: the least norm among matching candidates."""

    upper_bound: float = Field(ge=0.0)
    witness: str
    witness_index: int
    candidate_count: int
    norm_kind: NormKind
    mismatches: dict[str, float] = Field(default_factory=dict)


class EnvelopeReport(BaseModel):
    """Empirical lower envelope of ||H|| e^{|h|} over systems that displace a set."""

    minimum: Optional[float] = None
    displacing: list[str] = Field(default_factory=list)
    products: dict[str, float] = Field(default_factory=dict)


class ResultRow(BaseModel):
    """One measured quantity beside its required bound."""

    anchor: str  # module.operation
    experiment: str
    quantity: str
    measured: float
    required: Optional[float] = None
    relation: Literal["<=", "<", ">=", ">", "==", "info"] = "<="
    passed: bool = True
    warning: bool = False
    grid_hash: str = ""
    seed: Optional[int] = None
    note: str = ""

    @classmethod
    def check(
        cls,
        anchor: str,
        experiment: str,
        quantity: str,
        measured: float,
        required: float,
        relation: str = "<=",
        **extra,
    ) -> "ResultRow":
        """Factory method that evaluates the relation."""
        measured, required = float(measured), float(required)
        passed = {
            "<=": measured <= required,
            "<": measured < required,
            ">=": measured >= required,
            ">": measured > required,
            "==": measured == required,
        }[relation]
        return cls(
            anchor=anchor,
            experiment=experiment,
            quantity=quantity,
            measured=measured,
            required=required,
            relation=relation,
            passed=passed,
            **extra,
        )

    @classmethod
    def info(cls, anchor: str, experiment: str, quantity: str, measured: float, **extra) -> "ResultRow":
        return cls(anchor=anchor, experiment=experiment, quantity=quantity, measured=float(measured), relation="info", **extra)


class RunReport(BaseModel):
    """Every row of one run, in experiment order, with what is needed to rerun it."""

    source: str
    suite: Optional[str] = None
    seed: int = 0
    strict: bool = False
    grid_hash: str = ""
    experiments: list[str] = Field(default_factory=list)
    rows: list[ResultRow] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    def failures(self) -> list[ResultRow]:
        return [row for row in self.rows if not row.passed]
