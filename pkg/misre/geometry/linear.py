"""2D lines and 3D planes: the carrier vector is the input itself."""
from __future__ import annotations

import math
from typing import Any, Dict

import numpy as np

from .base import ModelSpec, PolynomialModel, as_list, lin


class Line2D(PolynomialModel):
    spec = ModelSpec("line2d", l=2, m=2, zeta=1, m_e=2)
    layout = (lin(0), lin(1))

    def to_geometric(self, theta: np.ndarray, alpha: float) -> Dict[str, Any]:
        normal = np.asarray(theta, dtype=float)
        direction = np.array([-normal[1], normal[0]])
        return {
            "normal": as_list(normal),
            "offset": float(alpha),
            "point": as_list(normal * alpha),
            "direction": as_list(direction),
            "angle_deg": math.degrees(math.atan2(direction[1], direction[0])) % 180.0,
        }


class Plane3D(PolynomialModel):
    spec = ModelSpec("plane3d", l=3, m=3, zeta=1, m_e=3)
    layout = (lin(0), lin(1), lin(2))

    def to_geometric(self, theta: np.ndarray, alpha: float) -> Dict[str, Any]:
        normal = np.asarray(theta, dtype=float)
        return {
            "normal": as_list(normal),
            "offset": float(alpha),
            "point": as_list(normal * alpha),
        }
