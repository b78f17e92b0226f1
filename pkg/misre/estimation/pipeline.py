"""
The extract-and-remove loop.

Every iteration draws M hypotheses on the points still unclaimed, keeps the
min-sum winner, estimates its scale, refines it by mean shift, classifies its
inliers and refits them. The inliers leave the working set; when an iteration
fails the winner's initial set leaves instead, so the loop always shrinks.
Structures come out ordered by strength n_in / sigma_tls.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from misre.core.config import settings
from misre.core.errors import ConstraintError, InvalidInputError, RefinementFailureError, SamplingFailureError
from misre.geometry import GeometryModel, get_model
from misre.geometry.base import CarrierSet, NormalizationTransform, unit_determinant
from misre.schemas.results import (
    ExpansionSummary,
    IterationDiagnostics,
    ResultDocument,
    ScaleSummary,
    StructureReport,
)

from .hypotheses import distances, n_epsilon, sample_hypotheses, score_hypotheses, select_best
from .mean_shift import INLIER_RULES, classify_inliers, refine, tls_refit
from .scale import ScaleEstimate, estimate_scale

logger = logging.getLogger(__name__)

EPSILON_RANGE = (1.0, 20.0)


@dataclass
class EstimationConfig:
    model_id: str
    trials: int = field(default_factory=lambda: settings.default_trials)
    epsilon: float = field(default_factory=lambda: settings.default_epsilon)
    seed: int = 0
    # (l, l) shared or (n, l, l) per point; rescaled to unit determinant.
    covariance: Optional[np.ndarray] = None
    inlier_rule: str = "trajectory"
    workers: Optional[int] = None

    def validate(self) -> None:
        if self.trials < 1:
            raise InvalidInputError(f"trials must be >= 1, got {self.trials}")
        lo, hi = EPSILON_RANGE
        if not lo <= self.epsilon <= hi:
            raise InvalidInputError(f"epsilon must be within [{lo:g}, {hi:g}] percent, got {self.epsilon}")
        if self.inlier_rule not in INLIER_RULES:
            raise InvalidInputError(f"unknown inlier rule {self.inlier_rule!r}")

    @property
    def refinement_trials(self) -> int:
        return max(1, self.trials // 10)

    def echo(self) -> Dict[str, Any]:
        return {
            "model_id": self.model_id,
            "trials": self.trials,
            "refinement_trials": self.refinement_trials,
            "epsilon": self.epsilon,
            "seed": self.seed,
            "inlier_rule": self.inlier_rule,
            "covariance": "per-point" if self.covariance is not None else "identity",
        }


@dataclass
class Structure:
    model_id: str
    inlier_indices: np.ndarray
    theta: np.ndarray
    alpha: float
    scale: float              # TLS scale, source units
    scale_estimate: float     # expansion scale, source units
    strength: float
    extraction_order: int
    geometric: Dict[str, Any] = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)

    @property
    def n_in(self) -> int:
        return int(self.inlier_indices.size)

    def to_report(self, rank: int) -> StructureReport:
        return StructureReport(
            rank=rank,
            model_id=self.model_id,
            strength=self.strength,
            scale=self.scale,
            scale_estimate=self.scale_estimate,
            n_in=self.n_in,
            theta=[float(v) for v in self.theta],
            alpha=float(self.alpha),
            geometric=self.geometric,
            inlier_indices=[int(i) for i in self.inlier_indices],
            flags=list(self.flags),
            extraction_order=self.extraction_order,
        )


@dataclass
class EstimationResult:
    model_id: str
    n_points: int
    structures: List[Structure]
    residual_indices: np.ndarray
    diagnostics: List[IterationDiagnostics]
    config: Dict[str, Any] = field(default_factory=dict)
    total_duration_ms: float = 0.0

    def to_document(self) -> ResultDocument:
        return ResultDocument(
            model_id=self.model_id,
            n_points=self.n_points,
            config=self.config,
            structures=[s.to_report(rank) for rank, s in enumerate(self.structures, start=1)],
            residual_indices=[int(i) for i in self.residual_indices],
            diagnostics=self.diagnostics,
            total_duration_ms=self.total_duration_ms,
        )


def strength(n_in: int, sigma_tls: float, floor: Optional[float] = None) -> float:
    """n_in / sigma_tls, with exact structures (sigma below the floor) divided by the floor."""
    floor = settings.sigma_floor if floor is None else floor
    return float(n_in) / max(float(sigma_tls), floor)


def _scale_summary(est: ScaleEstimate) -> ScaleSummary:
    return ScaleSummary(
        sigma=est.sigma,
        status=est.status,
        region=list(est.region) if est.region else None,
        records=[ExpansionSummary(eta=r.eta, width=r.width, k_t=r.k_t, extent=r.extent) for r in est.records],
        skipped=est.skipped,
    )


@dataclass
class Workspace:
    """Normalized and source-unit carriers of the full input, built once."""

    model: GeometryModel
    points: np.ndarray
    transform: NormalizationTransform
    normalized: CarrierSet
    source: CarrierSet


@dataclass
class ExtractionOutcome:
    structure: Optional[Structure]
    removed: np.ndarray          # indices into the full input
    diagnostics: IterationDiagnostics
    terminate: bool = False


def prepare_workspace(model: GeometryModel, points: np.ndarray, covariance: Optional[np.ndarray]) -> Workspace:
    cov = None
    if covariance is not None:
        cov = np.asarray(covariance, dtype=float)
        if cov.ndim == 2:
            cov = np.broadcast_to(cov, (points.shape[0],) + cov.shape)
        cov = unit_determinant(cov)
    y_norm, transform = model.normalize_points(points)
    # The covariance basis is used unchanged in normalized coordinates.
    return Workspace(model, points, transform, model.lift(y_norm, cov), model.lift(points, cov))


def extract_structure(
    ws: Workspace,
    remaining: np.ndarray,
    config: EstimationConfig,
    iteration: int,
) -> ExtractionOutcome:
    """One full pass on the remaining points (indices into the input)."""
    model = ws.model
    floor = settings.sigma_floor
    n_rem = int(remaining.size)
    n_eps = n_epsilon(n_rem, config.epsilon, model.spec.m_e)
    diag = IterationDiagnostics(iteration=iteration, remaining=n_rem, n_eps=n_eps)
    if n_rem < n_eps:
        diag.outcome = "terminated"
        return ExtractionOutcome(None, np.zeros(0, dtype=int), diag, terminate=True)

    sub = ws.normalized.subset(remaining)
    t0 = time.perf_counter()
    try:
        sampled = sample_hypotheses(
            model, sub, config.trials, config.seed, iteration=iteration, workers=config.workers
        )
    except SamplingFailureError as exc:
        diag.outcome = "sampling-failure"
        diag.rejections = exc.rejections
        diag.exhausted = config.trials
        diag.error = str(exc)
        logger.warning("[PIPELINE] iteration=%s sampling failed: %s", iteration, exc.message)
        return ExtractionOutcome(None, np.zeros(0, dtype=int), diag, terminate=True)
    diag.rejections = sampled.rejections
    diag.exhausted = sampled.exhausted
    t1 = time.perf_counter()
    diag.add_timing("sample", t0, t1)

    scored = score_hypotheses(sub, sampled.hypotheses, n_eps, workers=config.workers)
    winner = select_best(sub, scored)
    diag.winner_index = winner.index
    diag.winner_score = winner.score
    t2 = time.perf_counter()
    diag.add_timing("score", t1, t2)

    scale = estimate_scale(winner.sorted_distances, config.epsilon)
    diag.scale = _scale_summary(scale)
    sigma_hat = max(scale.sigma, floor)
    if scale.sigma < floor:
        diag.flags.append("scale-floored")
    t3 = time.perf_counter()
    diag.add_timing("scale", t2, t3)

    theta, alpha = winner.hypothesis.theta, winner.hypothesis.alpha
    try:
        refined = refine(
            model, sub, winner, sigma_hat, config.refinement_trials, config.seed,
            iteration=iteration, workers=config.workers,
        )
        theta, alpha = refined.theta, refined.alpha
        diag.refine_rejections = refined.rejections
        diag.excluded_points = refined.excluded
        if not refined.mode.support:
            diag.flags.append("no-support")
    except RefinementFailureError as exc:
        diag.flags.append("refine-fallback")
        diag.error = str(exc)
        logger.info("[PIPELINE] iteration=%s refinement fell back to the winner: %s", iteration, exc.message)
    t4 = time.perf_counter()
    diag.add_timing("refine", t3, t4)

    local = classify_inliers(sub, theta, alpha, sigma_hat, mode=config.inlier_rule, workers=config.workers)
    t5 = time.perf_counter()
    diag.add_timing("classify", t4, t5)

    if local.size == 0:
        removed = remaining[winner.initial_set]
        diag.outcome = "no-inliers"
        diag.removed = int(removed.size)
        logger.info("[PIPELINE] iteration=%s no inliers, dropping initial set of %s", iteration, removed.size)
        return ExtractionOutcome(None, removed, diag)

    fit = tls_refit(model, sub.subset(local), theta, alpha)
    inliers = np.sort(remaining[local])
    theta0, alpha0, sigma_hat0 = model.denormalize_structure(fit.theta, fit.alpha, sigma_hat, ws.transform)
    # TLS scale is remeasured in source units under the denormalized frame.
    d_src = distances(ws.source.subset(inliers), theta0, alpha0).distance
    finite = d_src[np.isfinite(d_src)]
    sigma_tls = float(finite.max()) if finite.size else 0.0
    flags = list(diag.flags) + fit.flags
    if sigma_tls < floor:
        flags.append("exact")
    try:
        geometric = model.to_geometric(theta0, alpha0)
    except ConstraintError as exc:
        geometric = {}
        flags.append("no-geometric")
        logger.debug("[PIPELINE] iteration=%s geometric export failed: %s", iteration, exc.message)
    t6 = time.perf_counter()
    diag.add_timing("refit", t5, t6)

    structure = Structure(
        model_id=model.spec.model_id,
        inlier_indices=inliers,
        theta=theta0,
        alpha=alpha0,
        scale=sigma_tls,
        scale_estimate=sigma_hat0,
        strength=strength(inliers.size, sigma_tls, floor),
        extraction_order=iteration,
        geometric=geometric,
        flags=flags,
    )
    diag.removed = int(inliers.size)
    logger.info(
        "[PIPELINE] iteration=%s remaining=%s n_eps=%s n_in=%s sigma_hat=%.4g sigma_tls=%.4g strength=%.4g",
        iteration, n_rem, n_eps, structure.n_in, sigma_hat0, sigma_tls, structure.strength,
    )
    return ExtractionOutcome(structure, inliers, diag)


def run(points: np.ndarray, config: EstimationConfig) -> EstimationResult:
    config.validate()
    model = get_model(config.model_id)
    t_start = time.perf_counter()
    points = model.as_points(points)
    n = points.shape[0]
    n_eps = n_epsilon(n, config.epsilon, model.spec.m_e)
    if n < n_eps:
        raise InvalidInputError(f"{n} points are fewer than the initial set size n_eps={n_eps}")

    ws = prepare_workspace(model, points, config.covariance)
    remaining = np.arange(n)
    structures: List[Structure] = []
    diagnostics: List[IterationDiagnostics] = []
    iteration = 0
    while remaining.size:
        outcome = extract_structure(ws, remaining, config, iteration)
        diagnostics.append(outcome.diagnostics)
        if outcome.terminate:
            if iteration == 0 and outcome.diagnostics.outcome == "sampling-failure":
                raise SamplingFailureError(
                    f"no acceptable hypothesis on the input: {outcome.diagnostics.error}",
                    outcome.diagnostics.rejections,
                )
            break
        if outcome.structure is not None:
            structures.append(outcome.structure)
        remaining = np.setdiff1d(remaining, outcome.removed, assume_unique=True)
        iteration += 1

    claimed = np.concatenate([s.inlier_indices for s in structures]) if structures else np.zeros(0, dtype=int)
    residual = np.setdiff1d(np.arange(n), claimed)
    structures.sort(key=lambda s: (-s.strength, -s.n_in, s.extraction_order))
    elapsed = round((time.perf_counter() - t_start) * 1000, 1)
    logger.info(
        "[PIPELINE] model=%s n=%s structures=%s residual=%s duration_ms=%s",
        model.spec.model_id, n, len(structures), residual.size, elapsed,
    )
    return EstimationResult(
        model_id=model.spec.model_id,
        n_points=n,
        structures=structures,
        residual_indices=residual,
        diagnostics=diagnostics,
        config=config.echo(),
        total_duration_ms=elapsed,
    )

