"""
SVG overlays of recovered structures over the point scatter.

2D inputs (and the first image of correspondences) are drawn in one panel
whose view box equals the scene region; 3D clouds get three axis-aligned
orthographic projections side by side. Each structure is one group with id
"structure-<rank>"; unclaimed points are the "residual" group.
"""
from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from matplotlib import colormaps
from matplotlib.figure import Figure

from misre.schemas.results import StructureReport

logger = logging.getLogger(__name__)

PANEL_3D = 300.0
PROJECTIONS = ((0, 1, "xy"), (0, 2, "xz"), (1, 2, "yz"))


def rank_colors(count: int) -> List[tuple]:
    cmap = colormaps["tab10" if count <= 10 else "tab20"]
    return [cmap(i % cmap.N) for i in range(count)]


def _scene_region(points: np.ndarray, dims: int) -> np.ndarray:
    top = np.max(points[:, :dims], axis=0) if points.size else np.ones(dims)
    return np.array([max(1.0, math.ceil(v)) for v in top])


def _scatter(ax, pts: np.ndarray, ix: int, iy: int, groups, colors) -> None:
    for (gid, idx), color in zip(groups, colors):
        if idx.size == 0:
            continue
        art = ax.scatter(pts[idx, ix], pts[idx, iy], s=4, c=[color], linewidths=0)
        art.set_gid(gid)


def render_svg(
    points: np.ndarray,
    structures: Sequence[StructureReport],
    path: Union[str, Path],
    region: Optional[Sequence[float]] = None,
    top_k: Optional[int] = None,
) -> None:
    pts = np.asarray(points, dtype=float)
    dims = 3 if pts.shape[1] == 3 else 2
    shown = list(structures)[:top_k] if top_k else list(structures)
    claimed = np.concatenate([np.asarray(s.inlier_indices, dtype=int) for s in shown]) if shown else np.zeros(0, dtype=int)
    residual = np.setdiff1d(np.arange(pts.shape[0]), claimed)
    groups = [("residual", residual)] + [
        (f"structure-{s.rank}", np.asarray(s.inlier_indices, dtype=int)) for s in shown
    ]
    colors = [(0.6, 0.6, 0.6, 1.0)] + rank_colors(len(shown))
    box = np.asarray(region, dtype=float) if region is not None else _scene_region(pts, dims)

    if dims == 2:
        width, height = float(box[0]), float(box[1])
        fig = Figure(figsize=(width / 72.0, height / 72.0), dpi=72)
        ax = fig.add_axes((0, 0, 1, 1))
        _scatter(ax, pts, 0, 1, groups, colors)
        ax.set_xlim(0, width)
        # Image convention: y grows downward.
        ax.set_ylim(height, 0)
        ax.set_axis_off()
    else:
        fig = Figure(figsize=(3 * PANEL_3D / 72.0, PANEL_3D / 72.0), dpi=72)
        for k, (ix, iy, name) in enumerate(PROJECTIONS):
            ax = fig.add_axes((k / 3.0, 0.0, 1 / 3.0, 1.0))
            _scatter(ax, pts, ix, iy, groups, colors)
            ax.set_xlim(0, box[ix])
            ax.set_ylim(0, box[iy])
            ax.set_aspect("equal", adjustable="box")
            ax.set_title(name, fontsize=8)
            ax.set_xticks([])
            ax.set_yticks([])
            ax.set_gid(f"projection-{name}")

    fig.savefig(str(path), format="svg")
    logger.debug("[SVG] wrote %s structures to %s", len(shown), path)
