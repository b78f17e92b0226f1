"""
Result document schemas.

One top-level JSON object per fit. Diagnostics carry everything needed to
replay the scale decision of every iteration.
"""
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

RESULT_SCHEMA_VERSION = "misre.result/1"


class ExpansionSummary(BaseModel):
    eta: float
    width: float
    k_t: int
    extent: float


class ScaleSummary(BaseModel):
    sigma: float
    status: str
    region: Optional[List[float]] = None
    records: List[ExpansionSummary] = Field(default_factory=list)
    skipped: int = 0


class IterationDiagnostics(BaseModel):
    iteration: int
    remaining: int
    n_eps: int
    # structure | sampling-failure | no-inliers | terminated
    outcome: str = "structure"
    winner_index: Optional[int] = None
    winner_score: Optional[float] = None
    scale: Optional[ScaleSummary] = None
    rejections: Dict[str, int] = Field(default_factory=dict)
    exhausted: int = 0
    refine_rejections: Dict[str, int] = Field(default_factory=dict)
    excluded_points: int = 0
    removed: int = 0
    flags: List[str] = Field(default_factory=list)
    timings_ms: Dict[str, float] = Field(default_factory=dict)
    error: Optional[str] = None

    def add_timing(self, stage: str, started: float, now: float) -> None:
        self.timings_ms[stage] = round((now - started) * 1000, 3)


class StructureReport(BaseModel):
    rank: int
    model_id: str
    strength: float
    scale: float                 # TLS scale, source units
    scale_estimate: float        # expansion scale, source units
    n_in: int
    theta: List[float]
    alpha: float
    geometric: Dict[str, Any] = Field(default_factory=dict)
    inlier_indices: List[int] = Field(default_factory=list)
    flags: List[str] = Field(default_factory=list)
    extraction_order: int = 0


class ResultDocument(BaseModel):
    schema_version: str = RESULT_SCHEMA_VERSION
    model_id: str
    n_points: int
    config: Dict[str, Any] = Field(default_factory=dict)
    structures: List[StructureReport] = Field(default_factory=list)
    residual_indices: List[int] = Field(default_factory=list)
    diagnostics: List[IterationDiagnostics] = Field(default_factory=list)
    total_duration_ms: float = 0
