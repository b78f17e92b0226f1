"""
Hypothesis engine.

Draws elemental subsets, turns them into (theta, alpha) hypotheses, scores
every hypothesis by the sum of its n_eps smallest max-Mahalanobis distances and
keeps the winner with its full ascending distance sequence.

Each hypothesis owns a random stream keyed by (seed, iteration, stage, index),
so the drawn subsets never depend on evaluation order or the worker count.
"""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from misre.core.config import settings
from misre.core.errors import InvalidInputError, SamplingFailureError
from misre.core.workers import chunk_ranges, ordered_map
from misre.geometry.base import ACCEPTED, STATUS_REASONS, CarrierSet, GeometryModel, Hypothesis

logger = logging.getLogger(__name__)

# Degenerate-variance rule for a channel with theta^T C theta ~ 0.
VARIANCE_EPS = 1e-15
NUMERATOR_EPS = 1e-12

# Random stream stages.
STAGE_GLOBAL = 0
STAGE_REFINE = 1


def n_epsilon(n: int, epsilon: float, m_e: int) -> int:
    """Initial set size: eps percent of n, at least five elemental subsets."""
    return max(int(math.ceil(round(epsilon * n / 100.0, 9))), 5 * m_e)


@dataclass(frozen=True)
class DistanceRecord:
    index: int
    distance: float
    channel: int  # 0-based channel achieving the max


@dataclass
class ProjectionTable:
    """Per-point quantities under one hypothesis, in point order.

    distance: max Mahalanobis distance over channels
    channel: channel achieving it
    projection: x^T theta of that channel
    variance: theta^T C theta of that channel
    """

    distance: np.ndarray
    channel: np.ndarray
    projection: np.ndarray
    variance: np.ndarray

    def __len__(self) -> int:
        return int(self.distance.shape[0])

    def subset(self, indices: np.ndarray) -> "ProjectionTable":
        return ProjectionTable(
            self.distance[indices], self.channel[indices], self.projection[indices], self.variance[indices]
        )


def _channel_terms(carrier_set: CarrierSet, thetas: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Projections and variances per hypothesis, point and channel, shape (B, n, zeta)."""
    thetas = np.atleast_2d(thetas)
    # (n, zeta, m) @ (m, B) -> (n, zeta, B)
    proj = carrier_set.carriers @ thetas.T
    # (n, zeta, m, m) @ (m, B) -> (n, zeta, m, B), then contract m against theta.
    ct = carrier_set.covariances @ thetas.T
    var = np.einsum("nzmb,bm->nzb", ct, thetas)
    return np.moveaxis(proj, 2, 0), np.moveaxis(var, 2, 0)


def _distances_from_terms(proj: np.ndarray, var: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    num = np.abs(proj - np.asarray(alphas, dtype=float)[:, None, None])
    safe = var > VARIANCE_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        d = num / np.sqrt(np.where(safe, var, 1.0))
    degenerate = np.where(num > NUMERATOR_EPS, np.inf, 0.0)
    return np.where(safe, d, degenerate)


def distance_matrix(carrier_set: CarrierSet, thetas: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    """Max-Mahalanobis distance of every point under every hypothesis, (B, n)."""
    proj, var = _channel_terms(carrier_set, thetas)
    return _distances_from_terms(proj, var, np.atleast_1d(alphas)).max(axis=2)


def distances(carrier_set: CarrierSet, theta: np.ndarray, alpha: float) -> ProjectionTable:
    """Full projection table of all points under a single (theta, alpha)."""
    theta = np.asarray(theta, dtype=float)
    alphas = np.array([float(alpha)])
    proj, var = _channel_terms(carrier_set, theta[None, :])
    d = _distances_from_terms(proj, var, alphas)[0]
    channel = np.argmax(d, axis=1)
    pick = channel[:, None]
    return ProjectionTable(
        distance=np.take_along_axis(d, pick, axis=1)[:, 0],
        channel=channel,
        projection=np.take_along_axis(proj[0], pick, axis=1)[:, 0],
        variance=np.take_along_axis(var[0], pick, axis=1)[:, 0],
    )


def mahalanobis(carrier_set: CarrierSet, h: Hypothesis, index: int = 0) -> DistanceRecord:
    """Largest Mahalanobis distance over the channels of one point."""
    if not 0 <= index < len(carrier_set):
        raise InvalidInputError(f"point index {index} outside carrier set of size {len(carrier_set)}")
    table = distances(carrier_set.subset([index]), h.theta, h.alpha)
    return DistanceRecord(index=index, distance=float(table.distance[0]), channel=int(table.channel[0]))


def _smallest_sum(d: np.ndarray, n_eps: int) -> np.ndarray:
    """Row-wise sum of the n_eps smallest values via linear-time selection."""
    n = d.shape[-1]
    if n_eps >= n:
        return d.sum(axis=-1)
    return np.partition(d, n_eps - 1, axis=-1)[..., :n_eps].sum(axis=-1)


def score_hypothesis(carrier_set: CarrierSet, h: Hypothesis, n_eps: int) -> float:
    if n_eps > len(carrier_set):
        raise InvalidInputError(f"n_eps={n_eps} exceeds the {len(carrier_set)} available points")
    d = distance_matrix(carrier_set, h.theta[None, :], np.array([h.alpha]))
    return float(_smallest_sum(d, n_eps)[0])


# ---------------------------------------------------------------------------
# Scored hypotheses and selection
# ---------------------------------------------------------------------------


@dataclass
class ScoredHypothesis:
    hypothesis: Hypothesis
    score: float
    n_eps: int
    # Filled for the winner only.
    table: Optional[ProjectionTable] = None
    order: Optional[np.ndarray] = None

    @property
    def index(self) -> int:
        return self.hypothesis.index

    @property
    def sorted_distances(self) -> np.ndarray:
        if self.table is None or self.order is None:
            raise InvalidInputError("distance sequence is only materialized for the selected hypothesis")
        return self.table.distance[self.order]

    @property
    def initial_set(self) -> np.ndarray:
        if self.order is None:
            raise InvalidInputError("initial set is only materialized for the selected hypothesis")
        return self.order[: self.n_eps]


def score_hypotheses(
    carrier_set: CarrierSet,
    hypotheses: Sequence[Hypothesis],
    n_eps: int,
    workers: Optional[int] = None,
    chunk: Optional[int] = None,
) -> List[ScoredHypothesis]:
    """Score every hypothesis; batches of fixed size are the unit of parallel work."""
    if n_eps > len(carrier_set):
        raise InvalidInputError(f"n_eps={n_eps} exceeds the {len(carrier_set)} available points")
    if not hypotheses:
        return []
    thetas = np.stack([h.theta for h in hypotheses])
    alphas = np.array([h.alpha for h in hypotheses], dtype=float)

    def _score(block: range) -> np.ndarray:
        sl = slice(block.start, block.stop)
        return _smallest_sum(distance_matrix(carrier_set, thetas[sl], alphas[sl]), n_eps)

    parts = ordered_map(_score, chunk_ranges(len(hypotheses), chunk or settings.hypothesis_chunk), workers)
    scores = np.concatenate(parts)
    return [ScoredHypothesis(h, float(s), n_eps) for h, s in zip(hypotheses, scores)]


def select_best(carrier_set: CarrierSet, scored: Sequence[ScoredHypothesis]) -> ScoredHypothesis:
    """Minimal score wins, lowest hypothesis index breaks ties.

    The winner's full ascending distance sequence is recomputed here.
    """
    if not scored:
        raise SamplingFailureError("no hypotheses to select from")
    best = min(scored, key=lambda s: (s.score, s.index))
    table = distances(carrier_set, best.hypothesis.theta, best.hypothesis.alpha)
    order = np.argsort(table.distance, kind="stable")
    return ScoredHypothesis(best.hypothesis, best.score, best.n_eps, table=table, order=order)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


@dataclass
class SamplingReport:
    hypotheses: List[Hypothesis]
    rejections: Dict[str, int] = field(default_factory=dict)
    exhausted: int = 0  # requested hypotheses that ran out of attempts


def hypothesis_stream(seed: int, iteration: int, stage: int, index: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(iteration), int(stage), int(index)))
    return np.random.default_rng(seq)


def sample_hypotheses(
    model: GeometryModel,
    carrier_set: CarrierSet,
    count: int,
    seed: int,
    *,
    iteration: int = 0,
    stage: int = STAGE_GLOBAL,
    population: Optional[np.ndarray] = None,
    budget: Optional[int] = None,
    workers: Optional[int] = None,
    chunk: Optional[int] = None,
) -> SamplingReport:
    """Draw `count` accepted hypotheses from elemental subsets.

    Subsets are drawn without replacement from `population` (all points by
    default). A requested hypothesis that is rejected is redrawn from its own
    stream up to `budget` times; hypotheses that exhaust the budget are
    dropped and counted. Raises SamplingFailureError when none is accepted.
    """
    m_e = model.spec.m_e
    pool = np.arange(len(carrier_set)) if population is None else np.asarray(population, dtype=int)
    if count < 1:
        raise InvalidInputError(f"hypothesis count must be >= 1, got {count}")
    if pool.size < m_e:
        raise InvalidInputError(f"need at least {m_e} points to sample, got {pool.size}")
    budget = budget or settings.rejection_budget

    def _draw(block: range) -> Tuple[List[Hypothesis], Counter, int]:
        streams = [hypothesis_stream(seed, iteration, stage, k) for k in block]
        pending = list(range(len(block)))
        accepted: Dict[int, Hypothesis] = {}
        rejected: Counter = Counter()
        attempts = 0
        while pending and attempts < budget:
            attempts += 1
            picks = np.stack([pool[streams[p].choice(pool.size, m_e, replace=False)] for p in pending])
            thetas, alphas, status = model.solve_elemental_batch(carrier_set.carriers[picks])
            still = []
            for row, p in enumerate(pending):
                if status[row] == ACCEPTED:
                    k = block[p]
                    accepted[p] = Hypothesis(thetas[row], float(alphas[row]), tuple(int(i) for i in picks[row]), k)
                else:
                    rejected[STATUS_REASONS[int(status[row])]] += 1
                    still.append(p)
            pending = still
        return [accepted[p] for p in sorted(accepted)], rejected, len(pending)

    parts = ordered_map(_draw, chunk_ranges(count, chunk or settings.hypothesis_chunk), workers)
    hypotheses: List[Hypothesis] = []
    rejections: Counter = Counter()
    exhausted = 0
    for hs, rej, left in parts:
        hypotheses.extend(hs)
        rejections.update(rej)
        exhausted += left

    if exhausted:
        logger.warning(
            "[SAMPLING] model=%s stage=%s exhausted=%s/%s rejections=%s",
            model.spec.model_id, stage, exhausted, count, dict(rejections),
        )
    if not hypotheses:
        raise SamplingFailureError(
            f"no acceptable elemental subset in {budget} attempts for any of {count} hypotheses",
            dict(rejections),
        )
    return SamplingReport(hypotheses, dict(rejections), exhausted)
