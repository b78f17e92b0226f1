"""
Adaptive scale estimation from the winner's sorted distance sequence.

For a growing segment width (the distance at the eta-percent position) the
sequence is cut into equal-width segments and expanded until the point count
of the next segment drops to half the running average. The scale is the
farthest expansion over the contiguous range of widths that expand at all.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from misre.core.config import settings
from misre.core.errors import InvalidInputError

logger = logging.getLogger(__name__)

STATUS_NORMAL = "normal"
STATUS_NO_EXPANSION = "no-expansion"

DENSITY_DROP = 0.5


@dataclass(frozen=True)
class ExpansionRecord:
    eta: float
    width: float
    k_t: int

    @property
    def extent(self) -> float:
        return self.k_t * self.width


@dataclass
class ScaleEstimate:
    sigma: float
    region: Optional[Tuple[float, float]]
    records: List[ExpansionRecord] = field(default_factory=list)
    status: str = STATUS_NORMAL
    skipped: int = 0  # widths of zero that were stepped over


def _finite(sorted_d: np.ndarray) -> np.ndarray:
    d = np.asarray(sorted_d, dtype=float)
    return d[np.isfinite(d)]


def _segment_limit(d: np.ndarray, width: float, max_segments: int) -> int:
    top = float(d.max()) if d.size else 0.0
    return max(1, min(int(math.ceil(top / width)), int(max_segments)))


def segment_counts(sorted_d: np.ndarray, width: float, max_segments: Optional[int] = None) -> np.ndarray:
    """n_k for k = 1..K: points with (k-1)*width < d <= k*width, zeros counted in k = 1."""
    if not width > 0:
        raise InvalidInputError(f"segment width must be positive, got {width}")
    d = _finite(sorted_d)
    k_max = _segment_limit(d, width, max_segments or settings.max_segments)
    k = np.maximum(1, np.ceil(d / width)).astype(np.int64)
    return np.bincount(k[k <= k_max], minlength=k_max + 1)[1:]


def expand(sorted_d: np.ndarray, width: float, max_segments: Optional[int] = None) -> int:
    """Smallest k with n_{k+1} <= half the mean of n_1..n_k; K_max if it never drops."""
    counts = segment_counts(sorted_d, width, max_segments).astype(float)
    if counts.size < 2:
        return int(counts.size) or 1
    running_mean = np.cumsum(counts)[:-1] / np.arange(1, counts.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        drop = (running_mean > 0) & (counts[1:] / running_mean <= DENSITY_DROP)
    hits = np.flatnonzero(drop)
    return int(hits[0]) + 1 if hits.size else int(counts.size)


def estimate_scale(
    sorted_d: np.ndarray,
    epsilon: float,
    n: Optional[int] = None,
    eta_max: Optional[float] = None,
    max_segments: Optional[int] = None,
) -> ScaleEstimate:
    d = np.asarray(sorted_d, dtype=float)
    n = len(d) if n is None else int(n)
    if d.size == 0 or n <= 0:
        raise InvalidInputError("cannot estimate a scale from an empty distance sequence")
    if n != d.size:
        raise InvalidInputError(f"sequence length {d.size} does not match n={n}")
    if not np.all(np.diff(d[np.isfinite(d)]) >= 0):
        raise InvalidInputError("distance sequence must be sorted ascending")
    finite = _finite(d)
    if finite.size == 0:
        raise InvalidInputError("distance sequence has no finite values")
    eta_max = float(eta_max if eta_max is not None else settings.eta_max)
    max_segments = max_segments or settings.max_segments

    def width_at(eta: float) -> float:
        pos = min(max(int(math.ceil(round(eta * n / 100.0, 9))), 1), n)
        return float(d[pos - 1])

    records: List[ExpansionRecord] = []
    skipped = 0
    start = end = None
    eta = float(epsilon)
    while eta <= eta_max + 1e-9:
        width = width_at(eta)
        if width > 0 and math.isfinite(width):
            k_t = expand(d, width, max_segments)
            records.append(ExpansionRecord(eta, width, k_t))
            if start is None:
                if k_t >= 2:
                    start = end = len(records) - 1
            elif k_t == 1:
                break
            else:
                end = len(records) - 1
        else:
            skipped += 1
        eta += 1.0

    top = float(finite.max())
    if start is None:
        sigma = min(width_at(float(epsilon)), top)
        logger.debug("[SCALE] no-expansion n=%s eta_range=[%s, %s] sigma=%.6g", n, epsilon, eta_max, sigma)
        return ScaleEstimate(sigma if math.isfinite(sigma) else top, None, records, STATUS_NO_EXPANSION, skipped)

    region = records[start : end + 1]
    sigma = min(max(r.extent for r in region), top)
    return ScaleEstimate(sigma, (region[0].eta, region[-1].eta), records, STATUS_NORMAL, skipped)
