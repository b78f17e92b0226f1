"""
Mode refinement: Epanechnikov mean shift over one-dimensional projections.

Points project onto the hypothesis direction (z_i = x_i^T theta on their worst
channel) and each carries its own bandwidth B_i = sigma^2 * theta^T C_i theta.
The update is the plain average of the projections whose window contains the
current location. An update that would lower the density is not taken.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from misre.core.config import settings
from misre.core.errors import InvalidInputError, RefinementFailureError, SamplingFailureError
from misre.core.workers import chunk_ranges, ordered_map
from misre.geometry.base import CarrierSet, GeometryModel, canonicalize

from .hypotheses import (
    NUMERATOR_EPS,
    STAGE_REFINE,
    VARIANCE_EPS,
    ScoredHypothesis,
    distances,
    sample_hypotheses,
)

logger = logging.getLogger(__name__)

INLIER_RULES = ("trajectory", "threshold")


@dataclass
class ModeResult:
    z: float
    height: float
    iterations: int
    support: bool = True
    theta: Optional[np.ndarray] = None
    start: float = 0.0
    trial: int = 0


# ---------------------------------------------------------------------------
# Kernel density and the batched hill climb
# ---------------------------------------------------------------------------


def _kernel_sums(z: np.ndarray, proj: np.ndarray, bw: np.ndarray, valid: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Window membership, kernel sum and projection sum for each row's location."""
    with np.errstate(divide="ignore", invalid="ignore"):
        u = (z[:, None] - proj) ** 2 / np.where(valid, bw, 1.0)
    inside = valid & (u <= 1.0)
    kern = np.where(inside, 1.0 - u, 0.0).sum(axis=1)
    sums = np.where(inside, proj, 0.0).sum(axis=1)
    return inside, kern, sums


def kde(z: float, projections: np.ndarray, bandwidths: np.ndarray, sigma: float = 1.0) -> float:
    """(1 / (n sigma)) * sum of (1 - u_i) over points with u_i = (z - z_i)^2 / B_i <= 1.

    Points with a non-positive bandwidth are left out (and out of n).
    """
    proj = np.asarray(projections, dtype=float).reshape(1, -1)
    bw = np.asarray(bandwidths, dtype=float).reshape(1, -1)
    valid = bw > 0
    n = int(valid.sum())
    if n == 0 or not sigma > 0:
        return 0.0
    _, kern, _ = _kernel_sums(np.array([float(z)]), proj, bw, valid)
    return float(kern[0] / (n * sigma))


def default_tolerance(bandwidths: np.ndarray, factor: Optional[float] = None) -> float:
    """factor * sigma * median(sqrt(theta^T C theta)) == factor * median(sqrt(B))."""
    bw = np.asarray(bandwidths, dtype=float)
    bw = bw[bw > 0]
    if bw.size == 0:
        return 0.0
    return float((factor or settings.mean_shift_tol_factor) * np.median(np.sqrt(bw)))


def mean_shift_batch(
    z0: np.ndarray,
    projections: np.ndarray,
    bandwidths: np.ndarray,
    sigma: float = 1.0,
    tol: Optional[np.ndarray] = None,
    max_iter: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Run T climbs at once.

    projections/bandwidths are (n,) shared by all rows or (T, n) per row.
    Returns (modes, heights, iterations, support) each of shape (T,).
    """
    z = np.asarray(z0, dtype=float).reshape(-1).copy()
    t = z.size
    proj = np.broadcast_to(np.asarray(projections, dtype=float), (t, np.shape(projections)[-1]))
    bw = np.broadcast_to(np.asarray(bandwidths, dtype=float), proj.shape)
    valid = bw > 0
    counts = valid.sum(axis=1)
    norm = np.where(counts > 0, counts * sigma, 1.0)
    if tol is None:
        tol = np.array([default_tolerance(row) for row in (bw[:1] if np.ndim(bandwidths) == 1 else bw)])
    tol = np.broadcast_to(np.asarray(tol, dtype=float), (t,))
    max_iter = max_iter or settings.mean_shift_max_iter

    inside, kern, sums = _kernel_sums(z, proj, bw, valid)
    members = inside.sum(axis=1)
    support = members > 0
    height = kern / norm
    iterations = np.zeros(t, dtype=int)
    active = support.copy()

    for _ in range(max_iter):
        if not active.any():
            break
        rows = np.flatnonzero(active)
        z_new = sums[rows] / members[rows]
        inside_n, kern_n, sums_n = _kernel_sums(z_new, proj[rows], bw[rows], valid[rows])
        h_new = kern_n / norm[rows]
        climbs = h_new >= height[rows]
        moved = rows[climbs]
        step = np.abs(z_new[climbs] - z[moved])
        z[moved] = z_new[climbs]
        height[moved] = h_new[climbs]
        sums[moved] = sums_n[climbs]
        members[moved] = inside_n[climbs].sum(axis=1)
        iterations[rows] += 1
        # Rows stop on convergence or when the next average would go downhill.
        done = np.zeros(rows.size, dtype=bool)
        done[~climbs] = True
        done[np.flatnonzero(climbs)[step <= tol[moved]]] = True
        active[rows[done]] = False
        active[members == 0] = False

    return z, np.where(support, height, 0.0), iterations, support


def mean_shift(
    z0: float,
    projections: np.ndarray,
    bandwidths: np.ndarray,
    sigma: float = 1.0,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
) -> ModeResult:
    """Climb from z0 to the closest mode; an empty starting window returns z0 with height 0."""
    if not np.isfinite(z0):
        raise InvalidInputError(f"mean shift start must be finite, got {z0}")
    z, h, it, sup = mean_shift_batch(
        np.array([z0]), projections, bandwidths, sigma, None if tol is None else np.array([tol]), max_iter
    )
    result = ModeResult(float(z[0]), float(h[0]), int(it[0]), bool(sup[0]), start=float(z0))
    if not result.support:
        logger.debug("[MEANSHIFT] no-support z0=%.6g", z0)
    return result


# ---------------------------------------------------------------------------
# Refinement over trials from the scale neighbourhood
# ---------------------------------------------------------------------------


@dataclass
class RefineReport:
    mode: ModeResult
    theta: np.ndarray
    alpha: float
    neighbourhood: int
    trials: int
    rejections: Dict[str, int] = field(default_factory=dict)
    excluded: int = 0  # points left out for a non-positive bandwidth


def refine(
    model: GeometryModel,
    carrier_set: CarrierSet,
    winner: ScoredHypothesis,
    sigma: float,
    trials: int,
    seed: int,
    *,
    iteration: int = 0,
    workers: Optional[int] = None,
) -> RefineReport:
    """Mean shift from N hypotheses drawn inside the sigma-neighbourhood of the winner.

    Returns the trial with the highest mode (lowest trial index on ties).
    """
    if winner.table is None:
        raise InvalidInputError("refine needs the selected hypothesis with its distance table")
    neighbourhood = np.flatnonzero(winner.table.distance <= sigma)
    if neighbourhood.size < model.spec.m_e:
        raise RefinementFailureError(
            f"scale neighbourhood holds {neighbourhood.size} points, need {model.spec.m_e}",
            {"neighbourhood": int(neighbourhood.size)},
        )
    try:
        sampled = sample_hypotheses(
            model, carrier_set, trials, seed,
            iteration=iteration, stage=STAGE_REFINE, population=neighbourhood, workers=workers,
        )
    except SamplingFailureError as exc:
        raise RefinementFailureError(f"no refinement trial could be drawn: {exc.message}", exc.details)

    hyps = sampled.hypotheses
    sigma2 = sigma * sigma

    def _climb(block: range) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, int]:
        tables = [distances(carrier_set, hyps[k].theta, hyps[k].alpha) for k in block]
        proj = np.stack([tb.projection for tb in tables])
        bw = sigma2 * np.stack([np.where(tb.variance > VARIANCE_EPS, tb.variance, 0.0) for tb in tables])
        tol = np.array([default_tolerance(row) for row in bw])
        z0 = np.array([hyps[k].alpha for k in block])
        z, h, it, sup = mean_shift_batch(z0, proj, bw, sigma, tol)
        return z, h, it, sup, int((bw <= 0).sum())

    parts = ordered_map(_climb, chunk_ranges(len(hyps), settings.hypothesis_chunk), workers)
    modes = np.concatenate([p[0] for p in parts])
    heights = np.concatenate([p[1] for p in parts])
    iters = np.concatenate([p[2] for p in parts])
    support = np.concatenate([p[3] for p in parts])
    excluded = sum(p[4] for p in parts)

    best = int(np.argmax(heights))  # first maximum == lowest trial index
    h = hyps[best]
    mode = ModeResult(
        float(modes[best]), float(heights[best]), int(iters[best]), bool(support[best]),
        theta=h.theta, start=h.alpha, trial=best,
    )
    logger.debug(
        "[REFINE] iteration=%s trials=%s neighbourhood=%s best=%s height=%.6g",
        iteration, len(hyps), neighbourhood.size, best, mode.height,
    )
    return RefineReport(mode, h.theta, mode.z, int(neighbourhood.size), len(hyps), sampled.rejections, excluded)


# ---------------------------------------------------------------------------
# Inlier classification and TLS refit
# ---------------------------------------------------------------------------


def classify_inliers(
    carrier_set: CarrierSet,
    theta: np.ndarray,
    alpha: float,
    sigma: float,
    mode: str = "trajectory",
    workers: Optional[int] = None,
) -> np.ndarray:
    """Indices (ascending) of the points that belong to the structure.

    trajectory: a climb starts at every point's own projection; the point is
    kept when its mode lands within sigma * sqrt(theta^T C_i theta) of alpha.
    threshold: the point's own projection is tested against that band.
    """
    if mode not in INLIER_RULES:
        raise InvalidInputError(f"unknown inlier rule {mode!r}; expected one of {', '.join(INLIER_RULES)}")
    table = distances(carrier_set, theta, alpha)
    proj = table.projection
    var = table.variance
    valid = var > VARIANCE_EPS
    band = sigma * np.sqrt(np.where(valid, var, 0.0))

    if mode == "threshold":
        landed = proj
    else:
        bw = np.where(valid, sigma * sigma * var, 0.0)
        tol = default_tolerance(bw)

        def _run(block: range) -> np.ndarray:
            sl = slice(block.start, block.stop)
            z, _, _, _ = mean_shift_batch(proj[sl], proj, bw, sigma, np.full(len(block), tol))
            return z

        landed = np.concatenate(ordered_map(_run, chunk_ranges(proj.size, settings.trajectory_chunk), workers))

    offset = np.abs(landed - alpha)
    keep = np.where(valid, offset <= band, np.abs(proj - alpha) <= NUMERATOR_EPS)
    return np.flatnonzero(keep)


@dataclass
class TlsResult:
    theta: np.ndarray
    alpha: float
    sigma: float
    flags: List[str] = field(default_factory=list)


def tls_refit(
    model: GeometryModel,
    inliers: CarrierSet,
    theta: np.ndarray,
    alpha: float,
) -> TlsResult:
    """Total least squares over the inlier carriers (channels pooled).

    theta/alpha are the mean-shift estimate, kept when the refit is skipped
    (fewer than m_e inliers) or breaks the model constraints. sigma is the
    largest inlier distance under whichever frame is kept.
    """
    flags: List[str] = []
    theta = np.asarray(theta, dtype=float)
    if len(inliers) < model.spec.m_e:
        flags.append("refit-skipped")
        t_fit, a_fit = theta, float(alpha)
    else:
        x = inliers.carriers.reshape(-1, model.spec.m)
        if model.homogeneous:
            scatter = x.T @ x
            center = np.zeros(model.spec.m)
        else:
            center = x.mean(axis=0)
            dev = x - center
            scatter = dev.T @ dev
        _, vecs = np.linalg.eigh(scatter)
        t_new = vecs[:, 0]
        a_new = 0.0 if model.homogeneous else float(center @ t_new)
        t_can, a_can = canonicalize(t_new, np.array([a_new]))
        if model.validate_constraints(t_can[0], float(a_can[0])):
            t_fit, a_fit = t_can[0], float(a_can[0])
        else:
            flags.append("tls-constraint-fallback")
            t_fit, a_fit = theta, float(alpha)

    d = distances(inliers, t_fit, a_fit).distance if len(inliers) else np.zeros(0)
    finite = d[np.isfinite(d)]
    sigma = float(finite.max()) if finite.size else 0.0
    return TlsResult(t_fit, a_fit, sigma, flags)
