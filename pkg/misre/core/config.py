from typing import Optional

from dotenv import load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict

# Load .env file before reading environment variables
load_dotenv()


class Settings(BaseSettings):
    # ------------------------------------------------------------------
    # Run defaults (CLI flags win over these)
    # ------------------------------------------------------------------
    default_trials: int = 1000
    default_epsilon: float = 5.0

    # Worker count for hypothesis scoring, refinement trials, inlier
    # trajectories and bench repetitions. MISRE_WORKERS in the environment.
    workers: int = 1

    # Hypotheses are scored in fixed-size batches. The batch (not the worker)
    # is the unit of work, so results are bit-identical for any worker count.
    hypothesis_chunk: int = 128

    # Resampling attempts allowed per requested hypothesis before sampling
    # gives up on the current point set.
    rejection_budget: int = 100

    # ------------------------------------------------------------------
    # Scale estimator
    # ------------------------------------------------------------------
    eta_max: int = 50
    max_segments: int = 10_000

    # ------------------------------------------------------------------
    # Mean shift
    # ------------------------------------------------------------------
    mean_shift_max_iter: int = 100
    # tol = factor * sigma_hat * median(sqrt(theta^T C theta))
    mean_shift_tol_factor: float = 1e-6
    # Rows of starting points processed together by the inlier trajectories.
    trajectory_chunk: int = 512

    # Zero scales (exact structures) are replaced by this floor.
    sigma_floor: float = 1e-9

    # ------------------------------------------------------------------
    # Model constraints
    # ------------------------------------------------------------------
    ellipse_max_axis_ratio: float = 10.0
    cylinder_tolerance: float = 0.05

    log_level: str = "INFO"

    # Sentry / error reporting. Unset DSN keeps Sentry disabled.
    sentry_dsn: Optional[str] = None
    sentry_environment: Optional[str] = None

    @property
    def effective_workers(self) -> int:
        return max(1, int(self.workers or 1))

    model_config = SettingsConfigDict(
        env_prefix="MISRE_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )


settings = Settings()
