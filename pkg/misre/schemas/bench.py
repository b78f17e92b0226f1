"""Repeated-trial benchmark report."""
from typing import List, Optional

from pydantic import BaseModel, Field

BENCH_SCHEMA_VERSION = "misre.bench/1"


class PlantedStats(BaseModel):
    planted_index: int
    kind: str
    sigma_g: float
    n_in: int
    successes: int = 0
    mean_scale: Optional[float] = None
    std_scale: Optional[float] = None
    mean_scale_estimate: Optional[float] = None
    mean_inliers: Optional[float] = None
    std_inliers: Optional[float] = None


class RunOutcome(BaseModel):
    repetition: int
    seed: int
    recovered: List[bool]
    scales: List[Optional[float]]
    scale_estimates: List[Optional[float]]
    inliers: List[Optional[int]]
    # Strongest purely-outlier structure and weakest matched one, for ordering checks.
    max_outlier_strength: Optional[float] = None
    min_matched_strength: Optional[float] = None
    n_structures: int = 0
    duration_ms: float = 0
    error: Optional[str] = None


class BenchReport(BaseModel):
    schema_version: str = BENCH_SCHEMA_VERSION
    scenario: str
    model_id: str
    method: str = "misre"
    repeats: int
    trials: int
    epsilon: float
    seed: int
    planted: List[PlantedStats] = Field(default_factory=list)
    all_recovered: int = 0
    mean_duration_ms: float = 0
    runs: List[RunOutcome] = Field(default_factory=list)
