"""Two-view relations: fundamental matrices and homographies.

Correspondences are y = [x, y, x', y'] with one normalization block per image.
"""
from __future__ import annotations

from typing import Any, Dict, Tuple

import numpy as np

from misre.core.errors import InternalError

from .base import (
    GeometryModel,
    ModelSpec,
    NormalizationTransform,
    PolynomialModel,
    canonicalize,
    lin,
    quad,
)


def fundamental_from_theta(theta: np.ndarray, alpha: float) -> np.ndarray:
    """F with [x' y' 1] F [x y 1]^T = x^T theta - alpha."""
    t = np.asarray(theta, dtype=float)
    return np.array(
        [
            [t[4], t[6], t[2]],
            [t[5], t[7], t[3]],
            [t[0], t[1], -float(alpha)],
        ]
    )


class Fundamental(PolynomialModel):
    spec = ModelSpec("fundamental", l=4, m=8, zeta=1, m_e=8, blocks=(2, 2))
    layout = (lin(0), lin(1), lin(2), lin(3), quad(0, 2), quad(0, 3), quad(1, 2), quad(1, 3))

    def to_geometric(self, theta: np.ndarray, alpha: float) -> Dict[str, Any]:
        f = fundamental_from_theta(theta, alpha)
        u, s, vt = np.linalg.svd(f)
        # Rank-2 projection happens only here, at export.
        f2 = u @ np.diag([s[0], s[1], 0.0]) @ vt
        f2 /= np.linalg.norm(f2)
        return {"F": f2.tolist(), "singular_values": [float(v) for v in s]}


class Homography(GeometryModel):
    """Two DLT rows per correspondence, theta = vec(H^T), alpha fixed at 0."""

    spec = ModelSpec("homography", l=4, m=9, zeta=2, m_e=4, blocks=(2, 2))
    homogeneous = True

    def carriers(self, y: np.ndarray) -> np.ndarray:
        y = self.as_points(y)
        n = y.shape[0]
        ph = np.column_stack([y[:, 0], y[:, 1], np.ones(n)])
        x = np.zeros((n, 2, 9))
        x[:, 0, 0:3] = -ph
        x[:, 0, 6:9] = y[:, 2:3] * ph
        x[:, 1, 3:6] = -ph
        x[:, 1, 6:9] = y[:, 3:4] * ph
        return x

    def jacobians(self, y: np.ndarray) -> np.ndarray:
        y = self.as_points(y)
        n = y.shape[0]
        jac = np.zeros((n, 2, 9, 4))
        for c, base in enumerate((0, 3)):
            # d/dx and d/dy of -[x y 1] and of x'[x y 1] (resp. y')
            jac[:, c, base, 0] = -1.0
            jac[:, c, base + 1, 1] = -1.0
            jac[:, c, 6, 0] = y[:, 2 + c]
            jac[:, c, 7, 1] = y[:, 2 + c]
            # d/dx' (channel 0) or d/dy' (channel 1)
            jac[:, c, 6, 2 + c] = y[:, 0]
            jac[:, c, 7, 2 + c] = y[:, 1]
            jac[:, c, 8, 2 + c] = 1.0
        return jac

    def denormalize_structure(
        self, theta: np.ndarray, alpha: float, sigma: float, transform: NormalizationTransform
    ) -> Tuple[np.ndarray, float, float]:
        h_norm = np.asarray(theta, dtype=float).reshape(3, 3)
        t1 = transform.block_matrix(0)
        t2 = transform.block_matrix(1)
        h = np.linalg.solve(t2, h_norm @ t1)
        norm = float(np.linalg.norm(h))
        if not np.isfinite(norm) or norm <= 0:
            raise InternalError("denormalized homography vanished")
        t0, _ = canonicalize(h.reshape(-1) / norm, np.zeros(1))
        return t0[0], 0.0, float(sigma / transform.mean_scale)

    def to_geometric(self, theta: np.ndarray, alpha: float) -> Dict[str, Any]:
        h = np.asarray(theta, dtype=float).reshape(3, 3)
        if abs(h[2, 2]) > 1e-12:
            h = h / h[2, 2]
        else:
            h = h / np.linalg.norm(h)
        return {"H": h.tolist()}
