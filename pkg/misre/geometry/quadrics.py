"""Spheres and cylinders in point clouds."""
from __future__ import annotations

import math
from typing import Any, Dict, Optional, Tuple

import numpy as np

from misre.core.config import settings
from misre.core.errors import ConstraintError

from .base import NORM2, ModelSpec, PolynomialModel, as_list, lin, quad


class Sphere3D(PolynomialModel):
    spec = ModelSpec("sphere3d", l=3, m=4, zeta=1, m_e=4)
    layout = (NORM2, lin(0), lin(1), lin(2))

    def to_geometric(self, theta: np.ndarray, alpha: float) -> Dict[str, Any]:
        theta = np.asarray(theta, dtype=float)
        if abs(theta[0]) < 1e-12:
            raise ConstraintError("degenerate sphere (no quadratic term)")
        center = -theta[1:] / (2.0 * theta[0])
        r2 = float(alpha) / theta[0] + float(center @ center)
        if r2 <= 0:
            raise ConstraintError("imaginary sphere")
        return {"center": as_list(center), "radius": math.sqrt(r2)}


def _cylinder_blocks(thetas: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Quadric blocks D (B, 3, 3) and d (B, 3) with y^T D y + 2 d^T y - alpha = 0."""
    t = np.atleast_2d(thetas)
    d_mat = np.empty((t.shape[0], 3, 3))
    d_mat[:, 0, 0] = t[:, 0]
    d_mat[:, 0, 1] = d_mat[:, 1, 0] = t[:, 1] / 2.0
    d_mat[:, 0, 2] = d_mat[:, 2, 0] = t[:, 2] / 2.0
    d_mat[:, 1, 1] = t[:, 3]
    d_mat[:, 1, 2] = d_mat[:, 2, 1] = t[:, 4] / 2.0
    d_mat[:, 2, 2] = t[:, 5]
    return d_mat, t[:, 6:9] / 2.0


class Cylinder3D(PolynomialModel):
    spec = ModelSpec("cylinder3d", l=3, m=9, zeta=1, m_e=9)
    layout = (
        quad(0, 0), quad(0, 1), quad(0, 2), quad(1, 1), quad(1, 2), quad(2, 2),
        lin(0), lin(1), lin(2),
    )

    def __init__(self, tolerance: Optional[float] = None):
        self.tolerance = tolerance or settings.cylinder_tolerance

    def constraint_mask(self, thetas: np.ndarray, alphas: np.ndarray) -> np.ndarray:
        d_mat, d_vec = _cylinder_blocks(thetas)
        vals = np.linalg.eigvalsh(d_mat)
        order = np.argsort(np.abs(vals), axis=1)
        vals = np.take_along_axis(vals, order, axis=1)
        s3, s2, s1 = vals[:, 0], vals[:, 1], vals[:, 2]
        top = np.maximum(np.abs(s1), 1e-300)
        tol = self.tolerance
        ok = (s1 * s2 > 0) & (np.abs(np.abs(s1) - np.abs(s2)) / top <= tol) & (np.abs(s3) / top <= tol)
        lam = (s1 + s2) / 2.0
        dd = np.einsum("bij,bj->bi", d_mat, d_vec) - lam[:, None] * d_vec
        d_norm = np.linalg.norm(d_vec, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            off = np.linalg.norm(dd, axis=1) / (np.abs(lam) * d_norm)
        ok &= (d_norm <= 1e-12 * top) | (off <= tol)
        return ok

    def to_geometric(self, theta: np.ndarray, alpha: float) -> Dict[str, Any]:
        d_mat, d_vec = _cylinder_blocks(np.asarray(theta, dtype=float))
        d_mat, d_vec = d_mat[0], d_vec[0]
        const = -float(alpha)
        vals, vecs = np.linalg.eigh(d_mat)
        axis_idx = int(np.argmin(np.abs(vals)))
        axis = vecs[:, axis_idx]
        lam = float(np.mean(np.delete(vals, axis_idx)))
        if abs(lam) < 1e-12:
            raise ConstraintError("degenerate cylinder quadric")
        if lam < 0:
            d_mat, d_vec, const, lam = -d_mat, -d_vec, -const, -lam
        proj = np.eye(3) - np.outer(axis, axis)
        point = -proj @ d_vec / lam
        r2 = float(point @ point) - const / lam
        if r2 <= 0:
            raise ConstraintError("imaginary cylinder")
        lead = int(np.argmax(np.abs(axis)))
        if axis[lead] < 0:
            axis = -axis
        return {"axis_point": as_list(point), "axis_direction": as_list(axis), "radius": math.sqrt(r2)}
