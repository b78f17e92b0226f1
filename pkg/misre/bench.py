"""
Repeated generate-and-fit benchmark.

A planted model counts as recovered when some returned structure holds it at
>= 50% purity and the structure's parameters are close to the planted ones:
lines/planes within 3 degrees of the normal, ellipses within 10% on center
and axes, spheres within 10% on center and radius, cylinders within 5 degrees
on the axis and 10% on the radius. Correspondence models are judged on purity
only. Statistics are taken over the recovered runs only.
"""
from __future__ import annotations

import logging
import math
import statistics
import time
from functools import partial
from multiprocessing import Pool
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from misre.core.errors import MisreError
from misre.core.workers import resolve_workers
from misre.data.synth import OUTLIER, LabeledDataset, generate
from misre.estimation.pipeline import EstimationConfig, EstimationResult, Structure, run
from misre.estimation.ransac import run_ransac
from misre.schemas.bench import BenchReport, PlantedStats, RunOutcome
from misre.schemas.scenario import PlantedModel, ScenarioSpec

logger = logging.getLogger(__name__)

MIN_PURITY = 0.5
NORMAL_DEG = 3.0
AXIS_DEG = 5.0
REL_TOL = 0.10


def _angle_deg(u: np.ndarray, v: np.ndarray) -> float:
    c = abs(float(np.dot(u, v))) / (np.linalg.norm(u) * np.linalg.norm(v))
    return math.degrees(math.acos(min(1.0, c)))


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b)


def parameters_match(pm: PlantedModel, s: Structure) -> bool:
    g = s.geometric
    p = pm.params
    if pm.kind in ("homography", "fundamental"):
        return True
    if pm.kind == "line":
        d = np.asarray(p["p1"], dtype=float) - np.asarray(p["p0"], dtype=float)
        return _angle_deg(s.theta[:2], np.array([-d[1], d[0]])) <= NORMAL_DEG
    if pm.kind == "plane":
        return _angle_deg(s.theta[:3], np.asarray(p["normal"], dtype=float)) <= NORMAL_DEG
    if not g:
        return False
    if pm.kind in ("ellipse", "circle"):
        axes0 = [float(p["radius"])] * 2 if pm.kind == "circle" else sorted(map(float, p["axes"]), reverse=True)
        center_err = float(np.linalg.norm(np.asarray(g["center"]) - np.asarray(p["center"], dtype=float)))
        return (
            center_err / axes0[0] <= REL_TOL
            and _rel(g["axes"][0], axes0[0]) <= REL_TOL
            and _rel(g["axes"][1], axes0[1]) <= REL_TOL
        )
    if pm.kind == "sphere":
        r0 = float(p["radius"])
        center_err = float(np.linalg.norm(np.asarray(g["center"]) - np.asarray(p["center"], dtype=float)))
        return center_err / r0 <= REL_TOL and _rel(g["radius"], r0) <= REL_TOL
    if pm.kind == "cylinder":
        return (
            _angle_deg(np.asarray(g["axis_direction"]), np.asarray(p["axis"], dtype=float)) <= AXIS_DEG
            and _rel(g["radius"], float(p["radius"])) <= REL_TOL
        )
    return False


def majority_label(dataset: LabeledDataset, s: Structure) -> Tuple[int, float]:
    labels = dataset.labels[s.inlier_indices]
    if labels.size == 0:
        return OUTLIER, 0.0
    values, counts = np.unique(labels, return_counts=True)
    best = int(np.argmax(counts))
    return int(values[best]), float(counts[best] / labels.size)


def score_run(dataset: LabeledDataset, result: EstimationResult) -> Dict[str, Any]:
    """Per planted model: the best matching structure (highest strength) or None."""
    spec = dataset.spec
    matched: List[Optional[Structure]] = [None] * len(spec.planted)
    outlier_strengths: List[float] = []
    for s in result.structures:  # strength order
        label, purity = majority_label(dataset, s)
        if label == OUTLIER:
            outlier_strengths.append(s.strength)
            continue
        if purity >= MIN_PURITY and matched[label] is None and parameters_match(spec.planted[label], s):
            matched[label] = s
    hits = [m for m in matched if m is not None]
    return {
        "matched": matched,
        "max_outlier_strength": max(outlier_strengths) if outlier_strengths else None,
        "min_matched_strength": min(m.strength for m in hits) if hits else None,
    }


def _one_run(
    repetition: int,
    spec: ScenarioSpec,
    trials: int,
    epsilon: float,
    seed: int,
    baseline: Optional[str],
    threshold: Optional[float],
) -> RunOutcome:
    run_seed = seed + repetition
    t0 = time.perf_counter()
    try:
        dataset = generate(spec.model_copy(update={"seed": run_seed}))
        config = EstimationConfig(model_id=spec.model_id, trials=trials, epsilon=epsilon, seed=run_seed, workers=1)
        if baseline == "ransac":
            result = run_ransac(dataset.points, config, threshold or 1.0)
        else:
            result = run(dataset.points, config)
    except MisreError as exc:
        logger.warning("[BENCH] repetition=%s failed: %s", repetition, exc)
        k = len(spec.planted)
        return RunOutcome(
            repetition=repetition, seed=run_seed, recovered=[False] * k, scales=[None] * k,
            scale_estimates=[None] * k, inliers=[None] * k, error=str(exc),
            duration_ms=round((time.perf_counter() - t0) * 1000, 1),
        )
    scored = score_run(dataset, result)
    matched = scored["matched"]
    return RunOutcome(
        repetition=repetition,
        seed=run_seed,
        recovered=[m is not None for m in matched],
        scales=[m.scale if m else None for m in matched],
        scale_estimates=[m.scale_estimate if m else None for m in matched],
        inliers=[m.n_in if m else None for m in matched],
        max_outlier_strength=scored["max_outlier_strength"],
        min_matched_strength=scored["min_matched_strength"],
        n_structures=len(result.structures),
        duration_ms=round((time.perf_counter() - t0) * 1000, 1),
    )


def summarize(spec: ScenarioSpec, runs: List[RunOutcome]) -> List[PlantedStats]:
    stats: List[PlantedStats] = []
    for i, pm in enumerate(spec.planted):
        ok = [r for r in runs if r.recovered[i]]
        scales = [r.scales[i] for r in ok]
        estimates = [r.scale_estimates[i] for r in ok]
        inliers = [float(r.inliers[i]) for r in ok]
        stats.append(
            PlantedStats(
                planted_index=i,
                kind=pm.kind,
                sigma_g=pm.sigma,
                n_in=pm.n_in,
                successes=len(ok),
                mean_scale=statistics.mean(scales) if scales else None,
                std_scale=statistics.pstdev(scales) if scales else None,
                mean_scale_estimate=statistics.mean(estimates) if estimates else None,
                mean_inliers=statistics.mean(inliers) if inliers else None,
                std_inliers=statistics.pstdev(inliers) if inliers else None,
            )
        )
    return stats


def run_bench(
    spec: ScenarioSpec,
    repeats: int,
    trials: int,
    epsilon: float,
    seed: int = 0,
    workers: Optional[int] = None,
    baseline: Optional[str] = None,
    threshold: Optional[float] = None,
) -> BenchReport:
    """R independent generate+fit cycles; repetition r uses seed + r throughout."""
    job = partial(
        _one_run, spec=spec, trials=trials, epsilon=epsilon, seed=seed, baseline=baseline, threshold=threshold
    )
    n_workers = min(resolve_workers(workers), repeats)
    if n_workers > 1:
        with Pool(processes=n_workers) as pool:
            runs = list(pool.imap(job, range(repeats)))
    else:
        runs = [job(r) for r in range(repeats)]

    return BenchReport(
        scenario=spec.name,
        model_id=spec.model_id,
        method=baseline or "misre",
        repeats=repeats,
        trials=trials,
        epsilon=epsilon,
        seed=seed,
        planted=summarize(spec, runs),
        all_recovered=sum(1 for r in runs if r.recovered and all(r.recovered)),
        mean_duration_ms=round(statistics.mean(r.duration_ms for r in runs), 1) if runs else 0.0,
        runs=runs,
    )
