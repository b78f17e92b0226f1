"""
Estimation problems as a uniform interface.

Each model lifts an input measurement y (length l) into zeta carrier vectors
of length m so the objective becomes linear, x^T theta - alpha = 0, and
propagates the measurement covariance basis through the carrier Jacobians.
Polynomial models describe their carriers as a layout of monomial terms; the
carriers, Jacobians and the effect of a similarity normalization on the
carriers all follow from that layout.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from misre.core.errors import DegenerateInputError, InternalError, InvalidInputError

# Second singular value (relative to the largest) below which an elemental
# system is treated as rank deficient.
RANK_TOL = 1e-10

# Elemental solve status codes.
ACCEPTED = 0
RANK_DEFICIENT = 1
CONSTRAINT_VIOLATION = 2

STATUS_REASONS = {
    RANK_DEFICIENT: "rank-deficient",
    CONSTRAINT_VIOLATION: "constraint-violation",
}


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    l: int       # input dimension
    m: int       # carrier dimension
    zeta: int    # carrier channels per input
    m_e: int     # elemental subset size
    # Coordinate blocks normalized independently (one per image for
    # correspondences, the whole point otherwise).
    blocks: Tuple[int, ...] = ()

    @property
    def coordinate_blocks(self) -> Tuple[int, ...]:
        return self.blocks or (self.l,)


@dataclass
class InputPoint:
    """One measurement and its unit-determinant covariance basis."""

    y: np.ndarray
    cov: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if self.cov is None:
            self.cov = np.eye(self.y.size)
            return
        self.cov = np.asarray(self.cov, dtype=float)
        validate_covariance_basis(self.cov, self.y.size)


def validate_covariance_basis(cov: np.ndarray, l: int) -> None:
    if cov.shape != (l, l):
        raise InvalidInputError(f"covariance basis must be {l}x{l}, got {cov.shape}")
    if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(cov).max()))):
        raise InvalidInputError("covariance basis must be symmetric")
    det = float(np.linalg.det(cov))
    if abs(det - 1.0) > 1e-9:
        raise InvalidInputError(f"covariance basis must have unit determinant, got {det:.12g}")


def unit_determinant(cov: np.ndarray) -> np.ndarray:
    """Rescale SPD matrices (..., l, l) to unit determinant."""
    cov = np.asarray(cov, dtype=float)
    l = cov.shape[-1]
    det = np.linalg.det(cov)
    if np.any(det <= 0):
        raise InvalidInputError("covariance basis must be positive definite")
    return cov / (det ** (1.0 / l))[..., None, None]


@dataclass
class CarrierSet:
    """Lifted carriers for n points.

    carriers (n, zeta, m), jacobians (n, zeta, m, l), covariances (n, zeta, m, m).
    """

    carriers: np.ndarray
    jacobians: np.ndarray
    covariances: np.ndarray

    def __len__(self) -> int:
        return int(self.carriers.shape[0])

    @property
    def zeta(self) -> int:
        return int(self.carriers.shape[1])

    def subset(self, indices: Sequence[int] | np.ndarray) -> "CarrierSet":
        idx = np.asarray(indices, dtype=int)
        return CarrierSet(self.carriers[idx], self.jacobians[idx], self.covariances[idx])


@dataclass(frozen=True)
class Hypothesis:
    theta: np.ndarray
    alpha: float
    source_subset: Tuple[int, ...] = ()
    index: int = 0


@dataclass(frozen=True)
class NormalizationTransform:
    """Per-block similarity y' = s_b (y_b - c_b)."""

    blocks: Tuple[int, ...]
    centers: Tuple[Tuple[float, ...], ...]
    scales: Tuple[float, ...]

    @classmethod
    def identity(cls, blocks: Sequence[int]) -> "NormalizationTransform":
        return cls(tuple(blocks), tuple(tuple(0.0 for _ in range(k)) for k in blocks), tuple(1.0 for _ in blocks))

    def _check(self) -> None:
        for s in self.scales:
            if not math.isfinite(s) or s <= 0.0:
                raise InternalError(f"singular normalization transform (scale={s})")

    @property
    def coordinate_scales(self) -> np.ndarray:
        return np.concatenate([np.full(k, s) for k, s in zip(self.blocks, self.scales)])

    @property
    def coordinate_centers(self) -> np.ndarray:
        return np.concatenate([np.asarray(c, dtype=float) for c in self.centers])

    @property
    def mean_scale(self) -> float:
        """Geometric mean of the block scales (exact for single-block models)."""
        self._check()
        return float(np.exp(np.mean(np.log(self.scales))))

    def apply(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return (y - self.coordinate_centers) * self.coordinate_scales

    def invert(self, y_norm: np.ndarray) -> np.ndarray:
        self._check()
        y_norm = np.asarray(y_norm, dtype=float)
        return y_norm / self.coordinate_scales + self.coordinate_centers

    def block_matrix(self, b: int) -> np.ndarray:
        """Homogeneous (k+1)x(k+1) matrix of block b."""
        k = self.blocks[b]
        s = self.scales[b]
        c = np.asarray(self.centers[b], dtype=float)
        mat = np.eye(k + 1)
        mat[:k, :k] *= s
        mat[:k, k] = -s * c
        return mat


def canonicalize(thetas: np.ndarray, alphas: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Fix the sign so the largest-magnitude component of theta is positive."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    lead = np.take_along_axis(thetas, np.argmax(np.abs(thetas), axis=1)[:, None], axis=1)[:, 0]
    sign = np.where(lead < 0, -1.0, 1.0)
    return thetas * sign[:, None], alphas * sign


class GeometryModel(ABC):
    """Uniform interface shared by every estimation problem."""

    spec: ModelSpec
    # Homogeneous models have alpha fixed at zero.
    homogeneous: bool = False

    # ------------------------------------------------------------------
    # Carriers
    # ------------------------------------------------------------------
    @abstractmethod
    def carriers(self, y: np.ndarray) -> np.ndarray:
        """(n, l) -> (n, zeta, m)"""

    @abstractmethod
    def jacobians(self, y: np.ndarray) -> np.ndarray:
        """(n, l) -> (n, zeta, m, l)"""

    def as_points(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y[None, :]
        if y.ndim != 2 or y.shape[1] != self.spec.l:
            raise InvalidInputError(
                f"{self.spec.model_id} expects {self.spec.l}-dimensional points, got shape {y.shape}"
            )
        return y

    def lift(self, y: np.ndarray, cov: Optional[np.ndarray] = None) -> CarrierSet:
        """Carriers, Jacobians and carrier covariances C = J C_y J^T."""
        y = self.as_points(y)
        x = self.carriers(y)
        jac = self.jacobians(y)
        if cov is None:
            c = np.einsum("nzml,nzkl->nzmk", jac, jac)
        else:
            cov = np.asarray(cov, dtype=float)
            if cov.ndim == 2:
                cov = np.broadcast_to(cov, (y.shape[0],) + cov.shape)
            if cov.shape != (y.shape[0], self.spec.l, self.spec.l):
                raise InvalidInputError(f"covariance basis shape {cov.shape} does not match points")
            c = np.einsum("nzml,nlj,nzkj->nzmk", jac, cov, jac)
        return CarrierSet(x, jac, c)

    def lift_point(self, point: InputPoint) -> CarrierSet:
        if point.y.size != self.spec.l:
            raise InvalidInputError(
                f"{self.spec.model_id} expects {self.spec.l}-dimensional points, got {point.y.size}"
            )
        return self.lift(point.y[None, :], point.cov[None, :, :])

    # ------------------------------------------------------------------
    # Elemental subsets
    # ------------------------------------------------------------------
    def solve_elemental_batch(self, subset_carriers: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Solve many elemental subsets at once.

        subset_carriers: (B, m_e, zeta, m). Returns thetas (B, m), alphas (B,)
        and a status code per subset (ACCEPTED / RANK_DEFICIENT /
        CONSTRAINT_VIOLATION).
        """
        spec = self.spec
        batch = subset_carriers.shape[0]
        rows = subset_carriers.reshape(batch, -1, spec.m)
        if self.homogeneous:
            system = rows
        else:
            system = np.concatenate([rows, -np.ones(rows.shape[:2] + (1,))], axis=2)
        cols = system.shape[2]
        _, sv, vt = np.linalg.svd(system, full_matrices=True)
        null = vt[:, -1, :]

        status = np.full(batch, ACCEPTED, dtype=int)
        # Unique solution needs rank cols-1.
        needed = cols - 2
        if sv.shape[1] <= needed:
            status[:] = RANK_DEFICIENT
        else:
            top = np.maximum(sv[:, 0], np.finfo(float).tiny)
            status[sv[:, needed] <= RANK_TOL * top] = RANK_DEFICIENT

        thetas = null[:, : spec.m].copy()
        norms = np.linalg.norm(thetas, axis=1)
        status[norms < 1e-12] = RANK_DEFICIENT
        thetas /= np.maximum(norms, 1e-300)[:, None]
        if self.homogeneous:
            alphas = np.zeros(batch)
        else:
            # Average projection of the subset carriers.
            alphas = np.einsum("brm,bm->br", rows, thetas).mean(axis=1)
        thetas, alphas = canonicalize(thetas, alphas)

        ok = status == ACCEPTED
        if np.any(ok):
            allowed = self.constraint_mask(thetas[ok], alphas[ok])
            idx = np.flatnonzero(ok)
            status[idx[~allowed]] = CONSTRAINT_VIOLATION
        return thetas, alphas, status

    def solve_elemental(self, y: np.ndarray, indices: Sequence[int] = (), index: int = 0,
                        cov: Optional[np.ndarray] = None) -> Optional[Hypothesis]:
        """Hypothesis through exactly m_e points, or None when rejected."""
        y = self.as_points(y)
        if y.shape[0] != self.spec.m_e:
            raise InvalidInputError(f"{self.spec.model_id} needs {self.spec.m_e} points per elemental subset")
        lifted = self.lift(y, cov)
        thetas, alphas, status = self.solve_elemental_batch(lifted.carriers[None])
        if status[0] != ACCEPTED:
            return None
        return Hypothesis(thetas[0], float(alphas[0]), tuple(int(i) for i in indices), index)

    # ------------------------------------------------------------------
    # Constraints
    # ------------------------------------------------------------------
    def constraint_mask(self, thetas: np.ndarray, alphas: np.ndarray) -> np.ndarray:
        return np.ones(np.atleast_2d(thetas).shape[0], dtype=bool)

    def validate_constraints(self, theta: np.ndarray, alpha: float) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(self.constraint_mask(theta[None, :], np.array([alpha]))[0])

    # ------------------------------------------------------------------
    # Normalization
    # ------------------------------------------------------------------
    def normalize_points(self, y: np.ndarray) -> Tuple[np.ndarray, NormalizationTransform]:
        y = self.as_points(y)
        if y.shape[0] == 0:
            raise InvalidInputError("cannot normalize an empty point set")
        centers: List[Tuple[float, ...]] = []
        scales: List[float] = []
        start = 0
        for k in self.spec.coordinate_blocks:
            block = y[:, start : start + k]
            c = block.mean(axis=0)
            mean_norm = float(np.linalg.norm(block - c, axis=1).mean())
            if mean_norm <= 1e-12 * max(1.0, float(np.abs(c).max())):
                raise DegenerateInputError("all points coincide; normalization undefined")
            centers.append(tuple(float(v) for v in c))
            scales.append(math.sqrt(k) / mean_norm)
            start += k
        transform = NormalizationTransform(self.spec.coordinate_blocks, tuple(centers), tuple(scales))
        return transform.apply(y), transform

    @abstractmethod
    def denormalize_structure(
        self, theta: np.ndarray, alpha: float, sigma: float, transform: NormalizationTransform
    ) -> Tuple[np.ndarray, float, float]:
        """Map (theta, alpha, sigma) estimated on normalized data back to source units."""

    # ------------------------------------------------------------------
    # Export
    # ------------------------------------------------------------------
    @abstractmethod
    def to_geometric(self, theta: np.ndarray, alpha: float) -> Dict[str, Any]:
        """Human-readable parameters."""


# ---------------------------------------------------------------------------
# Polynomial carriers
# ---------------------------------------------------------------------------
# Layout terms:
#   ("y", i)        y_i
#   ("yy", i, j)    y_i * y_j (i <= j)
#   ("norm2",)      sum_k y_k^2


@dataclass(frozen=True)
class Term:
    kind: str
    i: int = -1
    j: int = -1


def lin(i: int) -> Term:
    return Term("y", i)


def quad(i: int, j: int) -> Term:
    return Term("yy", min(i, j), max(i, j))


NORM2 = Term("norm2")


class PolynomialModel(GeometryModel):
    """Single-channel model whose carriers are monomials of degree <= 2."""

    layout: Tuple[Term, ...] = ()

    def carriers(self, y: np.ndarray) -> np.ndarray:
        y = self.as_points(y)
        cols = []
        for t in self.layout:
            if t.kind == "y":
                cols.append(y[:, t.i])
            elif t.kind == "yy":
                cols.append(y[:, t.i] * y[:, t.j])
            else:
                cols.append(np.sum(y * y, axis=1))
        return np.stack(cols, axis=1)[:, None, :]

    def jacobians(self, y: np.ndarray) -> np.ndarray:
        y = self.as_points(y)
        n, l = y.shape
        jac = np.zeros((n, 1, len(self.layout), l))
        for r, t in enumerate(self.layout):
            if t.kind == "y":
                jac[:, 0, r, t.i] = 1.0
            elif t.kind == "yy":
                jac[:, 0, r, t.i] += y[:, t.j]
                jac[:, 0, r, t.j] += y[:, t.i]
            else:
                jac[:, 0, r, :] = 2.0 * y
        return jac

    def _index(self, term: Term) -> int:
        try:
            return self.layout.index(term)
        except ValueError:  # pragma: no cover - every layout is closed under similarity maps
            raise InternalError(f"{self.spec.model_id}: carrier layout lacks {term}")

    def carrier_map(self, transform: NormalizationTransform) -> Tuple[np.ndarray, np.ndarray]:
        """(A, b) with x(T(y)) = A x(y) + b for the similarity T."""
        s = transform.coordinate_scales
        c = transform.coordinate_centers
        m = len(self.layout)
        a_mat = np.zeros((m, m))
        b_vec = np.zeros(m)
        for r, t in enumerate(self.layout):
            if t.kind == "y":
                a_mat[r, self._index(lin(t.i))] = s[t.i]
                b_vec[r] = -s[t.i] * c[t.i]
            elif t.kind == "yy":
                ss = s[t.i] * s[t.j]
                a_mat[r, r] += ss
                a_mat[r, self._index(lin(t.i))] -= ss * c[t.j]
                a_mat[r, self._index(lin(t.j))] -= ss * c[t.i]
                b_vec[r] = ss * c[t.i] * c[t.j]
            else:
                if not np.allclose(s, s[0]):
                    raise InternalError("squared-norm carrier needs an isotropic transform")
                s2 = s[0] ** 2
                a_mat[r, r] = s2
                for k in range(len(s)):
                    a_mat[r, self._index(lin(k))] -= 2.0 * s2 * c[k]
                b_vec[r] = s2 * float(c @ c)
        return a_mat, b_vec

    def denormalize_structure(
        self, theta: np.ndarray, alpha: float, sigma: float, transform: NormalizationTransform
    ) -> Tuple[np.ndarray, float, float]:
        a_mat, b_vec = self.carrier_map(transform)
        theta = np.asarray(theta, dtype=float)
        theta0 = a_mat.T @ theta
        alpha0 = float(alpha - theta @ b_vec)
        norm = float(np.linalg.norm(theta0))
        if not math.isfinite(norm) or norm <= 0.0:
            raise InternalError("denormalized theta vanished")
        t0, a0 = canonicalize(theta0 / norm, np.array([alpha0 / norm]))
        return t0[0], float(a0[0]), float(sigma / transform.mean_scale)


def as_list(values: np.ndarray | Sequence[float]) -> List[float]:
    return [float(v) for v in np.asarray(values, dtype=float).reshape(-1)]

