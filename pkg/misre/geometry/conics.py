"""2D ellipses through the conic carrier x = [x, y, x^2, xy, y^2]."""
from __future__ import annotations

import math
from typing import Any, Dict, Optional

import numpy as np

from misre.core.config import settings
from misre.core.errors import ConstraintError

from .base import ModelSpec, PolynomialModel, as_list, lin, quad


def _quadratic_eigenvalues(thetas: np.ndarray) -> np.ndarray:
    """Eigenvalues (ascending) of Q = [[t3, t4/2], [t4/2, t5]] per row."""
    a, b, c = thetas[:, 2], thetas[:, 3] / 2.0, thetas[:, 4]
    mid = (a + c) / 2.0
    rad = np.sqrt(((a - c) / 2.0) ** 2 + b * b)
    return np.stack([mid - rad, mid + rad], axis=1)


class Ellipse2D(PolynomialModel):
    spec = ModelSpec("ellipse2d", l=2, m=5, zeta=1, m_e=5)
    layout = (lin(0), lin(1), quad(0, 0), quad(0, 1), quad(1, 1))

    def __init__(self, max_axis_ratio: Optional[float] = None):
        self.max_axis_ratio = max_axis_ratio or settings.ellipse_max_axis_ratio

    def constraint_mask(self, thetas: np.ndarray, alphas: np.ndarray) -> np.ndarray:
        thetas = np.atleast_2d(thetas)
        disc = 4.0 * thetas[:, 2] * thetas[:, 4] - thetas[:, 3] ** 2
        ok = disc > 0
        lam = np.sort(np.abs(_quadratic_eigenvalues(thetas)), axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.sqrt(lam[:, 1] / lam[:, 0])
        # Semi-axes go as 1/sqrt(|eigenvalue|); Q and -Q describe the same conic.
        ok &= np.isfinite(ratio) & (ratio <= self.max_axis_ratio)
        return ok

    def to_geometric(self, theta: np.ndarray, alpha: float) -> Dict[str, Any]:
        theta = np.asarray(theta, dtype=float)
        if 4.0 * theta[2] * theta[4] - theta[3] ** 2 <= 0:
            raise ConstraintError("conic is not an ellipse (4*t3*t5 - t4^2 <= 0)")
        q = np.array([[theta[2], theta[3] / 2.0], [theta[3] / 2.0, theta[4]]])
        b = theta[:2]
        q_inv_b = np.linalg.solve(q, b)
        center = -0.5 * q_inv_b
        level = 0.25 * float(b @ q_inv_b) + float(alpha)
        vals, vecs = np.linalg.eigh(q)
        radii = level / vals
        if np.any(radii <= 0):
            raise ConstraintError("imaginary ellipse")
        axes = np.sqrt(radii)
        major = int(np.argmax(axes))
        direction = vecs[:, major]
        return {
            "center": as_list(center),
            "axes": [float(axes[major]), float(axes[1 - major])],
            "angle_deg": math.degrees(math.atan2(direction[1], direction[0])) % 180.0,
        }
