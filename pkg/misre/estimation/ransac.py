"""
Sequential RANSAC with a fixed inlier threshold.

Baseline for benchmarks only: each round keeps the hypothesis with the most
points within `threshold` (source units), refits them, removes them and goes
again until a round finds fewer than `min_inliers` points.
"""
from __future__ import annotations

import logging
import time
from typing import List, Optional

import numpy as np

from misre.core.config import settings
from misre.core.errors import ConstraintError, InvalidInputError, SamplingFailureError
from misre.core.workers import chunk_ranges, ordered_map
from misre.geometry import get_model
from misre.schemas.results import IterationDiagnostics

from .hypotheses import distance_matrix, distances, sample_hypotheses
from .mean_shift import tls_refit
from .pipeline import EstimationConfig, EstimationResult, Structure, prepare_workspace, strength

logger = logging.getLogger(__name__)

# Random stream stage reserved for the baseline.
STAGE_RANSAC = 2


def run_ransac(
    points: np.ndarray,
    config: EstimationConfig,
    threshold: float,
    min_inliers: Optional[int] = None,
    max_structures: int = 50,
) -> EstimationResult:
    if not threshold > 0:
        raise InvalidInputError(f"ransac threshold must be positive, got {threshold}")
    config.validate()
    model = get_model(config.model_id)
    points = model.as_points(points)
    n = points.shape[0]
    min_inliers = min_inliers or 5 * model.spec.m_e
    t_start = time.perf_counter()

    ws = prepare_workspace(model, points, config.covariance)
    # Normalized distances are source distances times the block scale.
    cut = threshold * ws.transform.mean_scale
    remaining = np.arange(n)
    structures: List[Structure] = []
    diagnostics: List[IterationDiagnostics] = []

    for iteration in range(max_structures):
        if remaining.size < max(min_inliers, model.spec.m_e):
            break
        diag = IterationDiagnostics(iteration=iteration, remaining=int(remaining.size), n_eps=min_inliers)
        diagnostics.append(diag)
        sub = ws.normalized.subset(remaining)
        try:
            sampled = sample_hypotheses(
                model, sub, config.trials, config.seed,
                iteration=iteration, stage=STAGE_RANSAC, workers=config.workers,
            )
        except SamplingFailureError as exc:
            diag.outcome = "sampling-failure"
            diag.error = str(exc)
            break
        diag.rejections = sampled.rejections
        hyps = sampled.hypotheses
        thetas = np.stack([h.theta for h in hyps])
        alphas = np.array([h.alpha for h in hyps])

        def _count(block: range) -> np.ndarray:
            sl = slice(block.start, block.stop)
            return (distance_matrix(sub, thetas[sl], alphas[sl]) <= cut).sum(axis=1)

        counts = np.concatenate(ordered_map(_count, chunk_ranges(len(hyps), settings.hypothesis_chunk), config.workers))
        best = int(np.argmax(counts))
        diag.winner_index = hyps[best].index
        if counts[best] < min_inliers:
            diag.outcome = "terminated"
            break

        local = np.flatnonzero(distances(sub, thetas[best], alphas[best]).distance <= cut)
        fit = tls_refit(model, sub.subset(local), thetas[best], float(alphas[best]))
        inliers = np.sort(remaining[local])
        theta0, alpha0, _ = model.denormalize_structure(fit.theta, fit.alpha, cut, ws.transform)
        d_src = distances(ws.source.subset(inliers), theta0, alpha0).distance
        finite = d_src[np.isfinite(d_src)]
        sigma_tls = float(finite.max()) if finite.size else 0.0
        try:
            geometric = model.to_geometric(theta0, alpha0)
        except ConstraintError:
            geometric = {}
        structures.append(
            Structure(
                model_id=model.spec.model_id,
                inlier_indices=inliers,
                theta=theta0,
                alpha=alpha0,
                scale=sigma_tls,
                scale_estimate=float(threshold),
                strength=strength(inliers.size, sigma_tls),
                extraction_order=iteration,
                geometric=geometric,
                flags=["ransac"] + fit.flags,
            )
        )
        diag.removed = int(inliers.size)
        remaining = np.setdiff1d(remaining, inliers, assume_unique=True)
        logger.debug("[RANSAC] iteration=%s n_in=%s remaining=%s", iteration, inliers.size, remaining.size)

    claimed = np.concatenate([s.inlier_indices for s in structures]) if structures else np.zeros(0, dtype=int)
    structures.sort(key=lambda s: (-s.strength, -s.n_in, s.extraction_order))
    echo = config.echo()
    echo.update({"method": "ransac", "threshold": threshold, "min_inliers": min_inliers})
    return EstimationResult(
        model_id=model.spec.model_id,
        n_points=n,
        structures=structures,
        residual_indices=np.setdiff1d(np.arange(n), claimed),
        diagnostics=diagnostics,
        config=echo,
        total_duration_ms=round((time.perf_counter() - t_start) * 1000, 1),
    )
