"""
Experiment file schemas.
One TOML file describes the chart, the named Hamiltonians, the grids and the experiments to run.
"""

from typing import Any, Literal, Optional

from pydantic import BaseModel, Field, PositiveFloat, model_validator

from contactflow.core.config import settings
from contactflow.schemas.chart import ChartSpec

SuiteName = Literal["verify", "metrics", "regularize", "mainlemma", "nonsmooth"]
SUITES: tuple[str, ...] = ("verify", "metrics", "regularize", "mainlemma", "nonsmooth")


class RunSection(BaseModel):
    seed: int = 0
    workers: int = Field(default=1, ge=1)
    strict: bool = False


class GridSection(BaseModel):
    """Spatial grid counts per axis, time knots and the size of sampled point clouds."""

    counts: int | list[int] = Field(default=settings.GRID_POINTS_PER_AXIS)
    time_knots: int = Field(default=settings.TIME_KNOTS, ge=3)
    sample_points: int = Field(default=settings.SAMPLE_POINTS, ge=1)
    box: Optional[list[tuple[float, float]]] = None


class IntegratorSection(BaseModel):
    step: PositiveFloat = settings.INTEGRATOR_STEP
    fd_step: PositiveFloat = settings.FD_STEP


class ToleranceSection(BaseModel):
    pullback: PositiveFloat = settings.PULLBACK_TOLERANCE
    closed_form: PositiveFloat = settings.CLOSED_FORM_TOLERANCE
    cross_check: PositiveFloat = settings.CROSS_CHECK_TOLERANCE
    match: PositiveFloat = settings.MATCH_TOLERANCE
    integrator: PositiveFloat = settings.INTEGRATOR_TOLERANCE


class HamiltonianSpec(BaseModel):
    """A builtin family with its parameters, addressable by its table name."""

    builtin: str
    params: dict[str, Any] = Field(default_factory=dict)
    interval: tuple[float, float] = (0.0, 1.0)


class ExperimentSpec(BaseModel):
    name: str
    suite: SuiteName
    # system expression over the named Hamiltonians, e.g. "conj(inv(A) * B, scale(1.5))"
    expression: Optional[str] = None
    params: dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _needs_expression(self) -> "ExperimentSpec":
        if self.suite != "nonsmooth" and not self.expression:
            raise ValueError(f"experiment '{self.name}' of suite '{self.suite}' needs an expression")
        return self


class OutputSection(BaseModel):
    directory: Optional[str] = None
    formats: list[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv", "json"])


class ExperimentConfig(BaseModel):
    """Schema of a whole experiment file."""

    run: RunSection = Field(default_factory=RunSection)
    chart: ChartSpec = Field(default_factory=ChartSpec)
    grid: GridSection = Field(default_factory=GridSection)
    integrator: IntegratorSection = Field(default_factory=IntegratorSection)
    tolerances: ToleranceSection = Field(default_factory=ToleranceSection)
    hamiltonians: dict[str, HamiltonianSpec] = Field(default_factory=dict)
    experiments: list[ExperimentSpec] = Field(default_factory=list)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def _unique_experiments(self) -> "ExperimentConfig":
        names = [e.name for e in self.experiments]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f"duplicate experiment names: {duplicates}")
        return self
