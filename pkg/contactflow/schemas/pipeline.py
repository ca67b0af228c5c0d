"""
Synthesis pipeline schemas.
The tolerance schedule and the trace of measured stage bounds.
"""

from typing import Literal, Optional

from pydantic import BaseModel, Field, model_validator

PipelineMode = Literal["near_input", "near_identity"]
Relation = Literal["<", "<=", "info"]


class Schedule(BaseModel):
    """
    Per-stage tolerances eps_i and time knots t_i, 1-based.

    Without explicit lists eps_i = (1/3) (1/2)^(2i - 1) and t_i = 1 - (1/2)^i.
    """

    depth: int = Field(default=3, ge=2)
    epsilons: Optional[list[float]] = None
    knots: Optional[list[float]] = None

    @model_validator(mode="after")
    def _monotone(self) -> "Schedule":
        for name, values in (("epsilons", self.epsilons), ("knots", self.knots)):
            if values is not None and len(values) < self.depth:
                raise ValueError(f"{name} lists fewer than depth={self.depth} entries")
        eps = [self.epsilon(i) for i in range(1, self.depth + 1)]
        if min(eps) <= 0 or any(b >= a for a, b in zip(eps[:-1], eps[1:])):
            raise ValueError("epsilons must be positive and strictly decreasing")
        knots = [self.knot(i) for i in range(0, self.depth + 1)]
        if any(b <= a for a, b in zip(knots[:-1], knots[1:])) or knots[-1] >= 1.0:
            raise ValueError("knots must increase strictly inside (0, 1)")
        return self

    def epsilon(self, i: int) -> float:
        if self.epsilons is not None:
            return float(self.epsilons[i - 1])
        return (1.0 / 3.0) * 0.5 ** (2 * i - 1)

    def knot(self, i: int) -> float:
        """t_i, with t_0 = 0."""
        if i == 0:
            return 0.0
        if self.knots is not None:
            return float(self.knots[i - 1])
        return 1.0 - 0.5**i


class StageRecord(BaseModel):
    """One measured quantity of a stage beside its required bound."""

    stage: int
    quantity: str
    measured: float
    required: Optional[float] = None
    relation: Relation = "<"
    passed: bool = True
    estimated: bool = False
    note: str = ""


class PipelineTrace(BaseModel):
    """Everything the synthesis measured, in execution order."""

    mode: PipelineMode
    strict: bool = False
    epsilon: float
    depth: int
    head_index: int = 0
    kept: list[str] = Field(default_factory=list)
    dropped: list[str] = Field(default_factory=list)
    delta_estimates: dict[int, float] = Field(default_factory=dict)
    records: list[StageRecord] = Field(default_factory=list)
    grid_hash: str = ""

    def check(self, stage: int, quantity: str, measured: float, required: float, relation: Relation = "<", **extra) -> StageRecord:
        measured, required = float(measured), float(required)
        passed = measured < required if relation == "<" else measured <= required
        record = StageRecord(
            stage=stage, quantity=quantity, measured=measured, required=required, relation=relation, passed=passed, **extra
        )
        self.records.append(record)
        return record

    def info(self, stage: int, quantity: str, measured: float, **extra) -> StageRecord:
        record = StageRecord(stage=stage, quantity=quantity, measured=float(measured), relation="info", **extra)
        self.records.append(record)
        return record

    def failures(self) -> list[StageRecord]:
        return [r for r in self.records if not r.passed]

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)
