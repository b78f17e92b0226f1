"""
Point, correspondence, covariance, label and result files.

CSV rows are "x,y", "x,y,z" or "x,y,x2,y2"; an optional non-numeric header
row, blank lines and '#' comments are skipped. Row order is point order.
"""
from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import yaml

from misre.core.errors import InvalidInputError, ParseError
from misre.geometry.base import unit_determinant
from misre.schemas.results import ResultDocument
from misre.schemas.scenario import ScenarioSpec

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _read_rows(path: PathLike, width: Optional[int] = None) -> np.ndarray:
    path = Path(path)
    rows: List[List[float]] = []
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, raw in enumerate(csv.reader(fh), start=1):
            cells = [c.strip() for c in raw]
            if not cells or all(not c for c in cells) or cells[0].startswith("#"):
                continue
            if not rows and not any(_is_number(c) for c in cells):
                # header
                continue
            try:
                values = [float(c) for c in cells]
            except ValueError:
                raise ParseError(f"non-numeric value in row {cells!r}", str(path), lineno)
            if not np.all(np.isfinite(values)):
                raise ParseError("non-finite coordinate", str(path), lineno)
            if width is not None and len(values) != width:
                raise InvalidInputError(
                    f"{path}:{lineno}: expected {width} columns, got {len(values)}",
                    {"path": str(path), "line": lineno},
                )
            if rows and len(values) != len(rows[0]):
                raise ParseError(f"expected {len(rows[0])} columns, got {len(values)}", str(path), lineno)
            rows.append(values)
    if not rows:
        return np.zeros((0, width or 0))
    return np.asarray(rows, dtype=float)


def _read_ply(path: PathLike) -> np.ndarray:
    try:
        import open3d as o3d
    except ImportError:
        raise InvalidInputError("reading PLY files needs the open3d package")
    cloud = o3d.io.read_point_cloud(str(path), format="ply")
    pts = np.asarray(cloud.points, dtype=float)
    if pts.size == 0:
        raise ParseError("PLY file holds no vertices", str(path), 1)
    return pts


def read_points(path: PathLike, dimensionality: int) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".ply":
        if dimensionality != 3:
            raise InvalidInputError(f"PLY input is 3D, model expects {dimensionality}D points")
        pts = _read_ply(path)
    else:
        pts = _read_rows(path, dimensionality)
    logger.debug("[IO] read %s points from %s", pts.shape[0], path)
    return pts


def read_correspondences(path: PathLike) -> np.ndarray:
    return read_points(path, 4)


def read_covariances(path: PathLike, dimensionality: int, n: int) -> np.ndarray:
    """l*l row-major values per row: one row shared by all points or one per point."""
    rows = _read_rows(path, dimensionality * dimensionality)
    if rows.shape[0] not in (1, n):
        raise InvalidInputError(f"covariance file has {rows.shape[0]} rows, expected 1 or {n}")
    cov = rows.reshape(-1, dimensionality, dimensionality)
    if not np.allclose(cov, np.swapaxes(cov, 1, 2)):
        raise InvalidInputError("covariance matrices must be symmetric")
    cov = unit_determinant(cov)
    return np.broadcast_to(cov, (n, dimensionality, dimensionality)).copy()


def write_points(path: PathLike, points: np.ndarray) -> None:
    """17 significant digits: exact float round trip."""
    np.savetxt(str(path), np.atleast_2d(points), delimiter=",", fmt="%.17g")


def write_labels(path: PathLike, labels: np.ndarray) -> None:
    np.savetxt(str(path), np.asarray(labels, dtype=int).reshape(-1, 1), fmt="%d", header="label", comments="")


def read_labels(path: PathLike) -> np.ndarray:
    return _read_rows(path, 1).reshape(-1).astype(int)


def write_result(result: ResultDocument, path: PathLike) -> None:
    Path(path).write_text(result.model_dump_json(indent=2), encoding="utf-8")


def read_result(path: PathLike) -> ResultDocument:
    return ResultDocument.model_validate_json(Path(path).read_text(encoding="utf-8"))


def write_scenario(spec: ScenarioSpec, path: PathLike) -> None:
    Path(path).write_text(yaml.safe_dump(spec.model_dump(mode="json"), sort_keys=False), encoding="utf-8")


def load_scenario(path: PathLike) -> ScenarioSpec:
    """YAML or JSON scenario file."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ParseError(f"scenario file is not valid YAML/JSON: {exc}", str(path), 1)
    if not isinstance(data, dict):
        raise InvalidInputError(f"{path}: scenario must be a mapping")
    try:
        return ScenarioSpec.model_validate(data)
    except ValueError as exc:
        raise InvalidInputError(f"{path}: {exc}")
