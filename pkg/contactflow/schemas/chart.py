"""
Chart descriptor schemas.
Mirror the `[chart]` table of an experiment file.
"""

from typing import Literal, Optional

from pydantic import BaseModel, Field, model_validator


class FormScaleSpec(BaseModel):
    """Named builtin scalar field f for the rescaled form e^f alpha."""

    name: Literal["linear_z", "sine_z", "radial"]
    coefficient: float = 0.1


class ChartSpec(BaseModel):
    """Schema for a contact chart: kind, dimension parameter, box and optional form scale."""

    kind: Literal["darboux_polar", "torus3"] = "darboux_polar"
    n: int = Field(default=1, ge=1)
    # Darboux boxes are in polar order (r1, theta1, ..., rn, thetan, z); T^3 boxes in (x, y, z)
    box: Optional[list[tuple[float, float]]] = None
    form_scale: Optional[FormScaleSpec] = None

    @model_validator(mode="after")
    def _torus_is_three_dimensional(self) -> "ChartSpec":
        if self.kind == "torus3" and self.n != 1:
            raise ValueError("torus3 charts have n = 1")
        return self
