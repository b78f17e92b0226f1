"""Synthetic scenario files (YAML or JSON)."""
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

PRIMITIVES = ("line", "ellipse", "circle", "plane", "sphere", "cylinder", "homography", "fundamental")


class PlantedModel(BaseModel):
    """One planted structure.

    params by kind:
      line        p0, p1 (segment endpoints)
      ellipse     center, axes [a, b], angle_deg
      circle      center, radius
      plane       center, normal, size [u, v]
      sphere      center, radius
      cylinder    center, axis, radius, length
      homography  H (3x3)
      fundamental rotation_deg [rx, ry, rz], translation, depth [near, far]
    """

    kind: str
    n_in: int = Field(ge=0)
    sigma: float = Field(default=0.0, ge=0.0)
    params: Dict[str, Any] = Field(default_factory=dict)
    noise: Optional[Literal["isotropic", "normal"]] = None

    @field_validator("kind")
    @classmethod
    def _known_kind(cls, v: str) -> str:
        if v not in PRIMITIVES:
            raise ValueError(f"unknown planted model kind {v!r}")
        return v


class ScenarioSpec(BaseModel):
    name: str = "custom"
    model_id: str
    # [width, height] for images, [x, y, z] box extents for clouds; the
    # origin is always 0.
    region: List[float]
    planted: List[PlantedModel] = Field(default_factory=list)
    n_out: int = Field(default=0, ge=0)
    seed: int = 0

    @model_validator(mode="after")
    def _region_shape(self) -> "ScenarioSpec":
        if len(self.region) not in (2, 3) or any(r <= 0 for r in self.region):
            raise ValueError("region must list 2 or 3 positive extents")
        return self

    @property
    def n_points(self) -> int:
        return sum(p.n_in for p in self.planted) + self.n_out
