"""
Labelled synthetic scenarios.

Inliers are exact samples of each planted locus plus Gaussian noise of std
sigma; outliers are uniform over the region. Curves and surfaces are
perturbed along the locus normal by default, lines and planes isotropically,
correspondences isotropically in both images. Label -1 marks an outlier.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from misre.core.errors import InvalidInputError
from misre.schemas.scenario import PlantedModel, ScenarioSpec

logger = logging.getLogger(__name__)

OUTLIER = -1

KIND_MODEL = {
    "line": "line2d",
    "ellipse": "ellipse2d",
    "circle": "ellipse2d",
    "plane": "plane3d",
    "sphere": "sphere3d",
    "cylinder": "cylinder3d",
    "homography": "homography",
    "fundamental": "fundamental",
}

CURVED = {"ellipse", "circle", "sphere", "cylinder"}
CORRESPONDENCE = {"homography", "fundamental"}


@dataclass
class LabeledDataset:
    points: np.ndarray
    labels: np.ndarray
    spec: ScenarioSpec

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def populations(self) -> Dict[int, int]:
        values, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}

    def members(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)


# ---------------------------------------------------------------------------
# Geometry helpers
# ---------------------------------------------------------------------------


def _vec(params: Dict[str, Any], key: str, size: int) -> np.ndarray:
    try:
        v = np.asarray(params[key], dtype=float).reshape(-1)
    except KeyError:
        raise InvalidInputError(f"planted model is missing parameter {key!r}")
    if v.size != size:
        raise InvalidInputError(f"parameter {key!r} needs {size} values, got {v.size}")
    return v


def _unit(v: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm <= 0:
        raise InvalidInputError("direction vector must be nonzero")
    return v / norm


def _orthonormal_basis(normal: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    n = _unit(normal)
    helper = np.eye(3)[int(np.argmin(np.abs(n)))]
    e1 = _unit(np.cross(n, helper))
    return e1, np.cross(n, e1)


def _rotation(angles_deg: np.ndarray) -> np.ndarray:
    rx, ry, rz = np.radians(angles_deg)
    cx, sx, cy, sy, cz, sz = math.cos(rx), math.sin(rx), math.cos(ry), math.sin(ry), math.cos(rz), math.sin(rz)
    r_x = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    r_y = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    r_z = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return r_z @ r_y @ r_x


def camera_matrix(region: List[float]) -> np.ndarray:
    w, h = region[0], region[1]
    return np.array([[w, 0.0, w / 2.0], [0.0, w, h / 2.0], [0.0, 0.0, 1.0]])


def _skew(t: np.ndarray) -> np.ndarray:
    return np.array([[0, -t[2], t[1]], [t[2], 0, -t[0]], [-t[1], t[0], 0]])


def planted_fundamental(pm: PlantedModel, region: List[float]) -> np.ndarray:
    """F with x2^T F x1 = 0 for the planted rigid motion, unit Frobenius norm."""
    k = camera_matrix(region)
    r = _rotation(_vec(pm.params, "rotation_deg", 3))
    t = _vec(pm.params, "translation", 3)
    k_inv = np.linalg.inv(k)
    f = k_inv.T @ _skew(t) @ r @ k_inv
    return f / np.linalg.norm(f)


# ---------------------------------------------------------------------------
# Samplers: (rng, planted, region) -> (exact points, unit normals or None)
# ---------------------------------------------------------------------------


def _line(rng: np.random.Generator, pm: PlantedModel, region: List[float]):
    p0, p1 = _vec(pm.params, "p0", 2), _vec(pm.params, "p1", 2)
    t = rng.uniform(0.0, 1.0, pm.n_in)
    d = _unit(p1 - p0)
    normal = np.array([-d[1], d[0]])
    return p0 + t[:, None] * (p1 - p0), np.broadcast_to(normal, (pm.n_in, 2))


def _ellipse_axes(pm: PlantedModel) -> Tuple[np.ndarray, float, float, float]:
    center = _vec(pm.params, "center", 2)
    if pm.kind == "circle":
        r = float(pm.params.get("radius", 0.0))
        return center, r, r, 0.0
    a, b = _vec(pm.params, "axes", 2)
    return center, float(a), float(b), math.radians(float(pm.params.get("angle_deg", 0.0)))


def _ellipse(rng: np.random.Generator, pm: PlantedModel, region: List[float]):
    center, a, b, angle = _ellipse_axes(pm)
    if a <= 0 or b <= 0:
        raise InvalidInputError("ellipse axes must be positive")
    # Sampled by parameter angle, not arc length.
    phi = rng.uniform(0.0, 2.0 * math.pi, pm.n_in)
    rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    local = np.column_stack([a * np.cos(phi), b * np.sin(phi)])
    local_normal = np.column_stack([b * np.cos(phi), a * np.sin(phi)])
    local_normal /= np.linalg.norm(local_normal, axis=1, keepdims=True)
    return center + local @ rot.T, local_normal @ rot.T


def _plane(rng: np.random.Generator, pm: PlantedModel, region: List[float]):
    center = _vec(pm.params, "center", 3)
    normal = _unit(_vec(pm.params, "normal", 3))
    su, sv = _vec(pm.params, "size", 2)
    e1, e2 = _orthonormal_basis(normal)
    u = rng.uniform(-su / 2.0, su / 2.0, pm.n_in)
    v = rng.uniform(-sv / 2.0, sv / 2.0, pm.n_in)
    return center + u[:, None] * e1 + v[:, None] * e2, np.broadcast_to(normal, (pm.n_in, 3))


def _sphere(rng: np.random.Generator, pm: PlantedModel, region: List[float]):
    center = _vec(pm.params, "center", 3)
    radius = float(pm.params.get("radius", 0.0))
    if radius <= 0:
        raise InvalidInputError("sphere radius must be positive")
    dirs = rng.normal(size=(pm.n_in, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return center + radius * dirs, dirs


def _cylinder(rng: np.random.Generator, pm: PlantedModel, region: List[float]):
    center = _vec(pm.params, "center", 3)
    axis = _unit(_vec(pm.params, "axis", 3))
    radius = float(pm.params.get("radius", 0.0))
    length = float(pm.params.get("length", 0.0))
    if radius <= 0 or length <= 0:
        raise InvalidInputError("cylinder radius and length must be positive")
    e1, e2 = _orthonormal_basis(axis)
    phi = rng.uniform(0.0, 2.0 * math.pi, pm.n_in)
    h = rng.uniform(-length / 2.0, length / 2.0, pm.n_in)
    radial = np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2
    return center + h[:, None] * axis + radius * radial, radial


def _homography(rng: np.random.Generator, pm: PlantedModel, region: List[float]):
    h = np.asarray(pm.params.get("H"), dtype=float)
    if h.shape != (3, 3):
        raise InvalidInputError("homography needs a 3x3 'H'")
    w, ht = region[0], region[1]
    p1 = np.column_stack([rng.uniform(0, w, pm.n_in), rng.uniform(0, ht, pm.n_in), np.ones(pm.n_in)])
    p2 = p1 @ h.T
    if np.any(np.abs(p2[:, 2]) < 1e-12):
        raise InvalidInputError("homography maps a sampled point to infinity")
    p2 = p2[:, :2] / p2[:, 2:3]
    return np.column_stack([p1[:, :2], p2]), None


def _fundamental(rng: np.random.Generator, pm: PlantedModel, region: List[float]):
    k = camera_matrix(region)
    r = _rotation(_vec(pm.params, "rotation_deg", 3))
    t = _vec(pm.params, "translation", 3)
    near, far = _vec(pm.params, "depth", 2)
    if not 0 < near < far:
        raise InvalidInputError("fundamental depth range must satisfy 0 < near < far")
    w, ht = region[0], region[1]
    pix = np.column_stack([rng.uniform(0, w, pm.n_in), rng.uniform(0, ht, pm.n_in), np.ones(pm.n_in)])
    depth = rng.uniform(near, far, pm.n_in)
    world = (pix @ np.linalg.inv(k).T) * depth[:, None]
    cam2 = world @ r.T + t
    if np.any(cam2[:, 2] <= 1e-9):
        raise InvalidInputError("planted motion puts points behind the second camera")
    proj = cam2 @ k.T
    return np.column_stack([pix[:, :2], proj[:, :2] / proj[:, 2:3]]), None


SAMPLERS: Dict[str, Callable[..., Tuple[np.ndarray, Optional[np.ndarray]]]] = {
    "line": _line,
    "ellipse": _ellipse,
    "circle": _ellipse,
    "plane": _plane,
    "sphere": _sphere,
    "cylinder": _cylinder,
    "homography": _homography,
    "fundamental": _fundamental,
}


def _bounds(pm: PlantedModel) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Axis-aligned box around a planted locus (None for correspondences)."""
    p = pm.params
    if pm.kind == "line":
        pts = np.stack([_vec(p, "p0", 2), _vec(p, "p1", 2)])
        return pts.min(axis=0), pts.max(axis=0)
    if pm.kind in ("ellipse", "circle"):
        c, a, b, ang = _ellipse_axes(pm)
        half = np.array([
            math.hypot(a * math.cos(ang), b * math.sin(ang)),
            math.hypot(a * math.sin(ang), b * math.cos(ang)),
        ])
        return c - half, c + half
    if pm.kind == "sphere":
        c = _vec(p, "center", 3)
        r = float(p.get("radius", 0.0))
        return c - r, c + r
    if pm.kind == "plane":
        c = _vec(p, "center", 3)
        e1, e2 = _orthonormal_basis(_vec(p, "normal", 3))
        su, sv = _vec(p, "size", 2)
        half = np.abs(e1) * su / 2.0 + np.abs(e2) * sv / 2.0
        return c - half, c + half
    if pm.kind == "cylinder":
        c = _vec(p, "center", 3)
        axis = _unit(_vec(p, "axis", 3))
        r, length = float(p.get("radius", 0.0)), float(p.get("length", 0.0))
        half = np.abs(axis) * length / 2.0 + r * np.sqrt(np.clip(1.0 - axis ** 2, 0.0, 1.0))
        return c - half, c + half
    return None


def validate_scenario(spec: ScenarioSpec) -> None:
    for i, pm in enumerate(spec.planted):
        model_id = KIND_MODEL[pm.kind]
        if model_id != spec.model_id:
            raise InvalidInputError(f"planted model {i} ({pm.kind}) does not fit model {spec.model_id}")
        box = _bounds(pm)
        if box is None:
            continue
        lo, hi = box
        region = np.asarray(spec.region, dtype=float)
        if lo.size != region.size:
            raise InvalidInputError(f"planted model {i} ({pm.kind}) needs a {lo.size}D region")
        if np.any(lo < -1e-9) or np.any(hi > region + 1e-9):
            raise InvalidInputError(f"planted model {i} ({pm.kind}) does not fit inside the region {spec.region}")


def _outliers(rng: np.random.Generator, spec: ScenarioSpec) -> np.ndarray:
    region = np.asarray(spec.region, dtype=float)
    if spec.model_id in ("homography", "fundamental"):
        box = np.concatenate([region[:2], region[:2]])
    else:
        box = region
    return rng.uniform(0.0, 1.0, (spec.n_out, box.size)) * box


def generate(spec: ScenarioSpec) -> LabeledDataset:
    """Deterministic per spec.seed."""
    validate_scenario(spec)
    rng = np.random.default_rng(spec.seed)
    chunks: List[np.ndarray] = []
    labels: List[np.ndarray] = []
    for i, pm in enumerate(spec.planted):
        exact, normals = SAMPLERS[pm.kind](rng, pm, spec.region)
        noise_mode = pm.noise or ("normal" if pm.kind in CURVED else "isotropic")
        if pm.sigma > 0:
            if noise_mode == "normal" and normals is not None:
                exact = exact + rng.normal(0.0, pm.sigma, pm.n_in)[:, None] * normals
            else:
                exact = exact + rng.normal(0.0, pm.sigma, exact.shape)
        chunks.append(exact)
        labels.append(np.full(pm.n_in, i, dtype=int))
    chunks.append(_outliers(rng, spec))
    labels.append(np.full(spec.n_out, OUTLIER, dtype=int))

    points = np.concatenate(chunks) if chunks else np.zeros((0, len(spec.region)))
    lab = np.concatenate(labels)
    order = rng.permutation(points.shape[0])
    logger.debug("[SYNTH] scenario=%s n=%s seed=%s", spec.name, points.shape[0], spec.seed)
    return LabeledDataset(points[order], lab[order], spec)


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

IMAGE = [700.0, 700.0]
BOX = [10.0, 10.0, 10.0]


def _lines(seed: int, sigma: Optional[float]) -> ScenarioSpec:
    rows = [
        ((50, 100), (650, 200), 300, 3.0),
        ((100, 650), (600, 50), 250, 6.0),
        ((80, 300), (620, 620), 200, 9.0),
        ((350, 30), (400, 680), 150, 12.0),
        ((30, 500), (680, 420), 100, 15.0),
    ]
    planted = [PlantedModel(kind="line", n_in=n, sigma=s, params={"p0": list(a), "p1": list(b)}) for a, b, n, s in rows]
    return ScenarioSpec(name="five-lines", model_id="line2d", region=IMAGE, planted=planted, n_out=350, seed=seed)


def _ellipses(rows, n_out: int, name: str, seed: int) -> ScenarioSpec:
    planted = [
        PlantedModel(kind="ellipse", n_in=n, sigma=s, params={"center": list(c), "axes": list(ax), "angle_deg": ang})
        for c, ax, ang, n, s in rows
    ]
    return ScenarioSpec(name=name, model_id="ellipse2d", region=IMAGE, planted=planted, n_out=n_out, seed=seed)


THREE_ELLIPSES = [
    ((220, 250), (150, 90), 20.0, 300, 3.0),
    ((480, 450), (170, 110), -30.0, 250, 6.0),
    ((250, 520), (100, 70), 60.0, 200, 9.0),
]

TWO_ELLIPSES = [
    ((250, 300), (160, 100), 15.0, 200, 5.0),
    ((450, 430), (150, 120), -40.0, 200, 10.0),
]


def _circle(radius: float, name: str):
    def build(seed: int, sigma: Optional[float]) -> ScenarioSpec:
        pm = PlantedModel(kind="circle", n_in=200, sigma=10.0 if sigma is None else sigma,
                          params={"center": [350, 350], "radius": radius})
        return ScenarioSpec(name=name, model_id="ellipse2d", region=IMAGE, planted=[pm], n_out=1500, seed=seed)

    return build


def _single_line(seed: int, sigma: Optional[float]) -> ScenarioSpec:
    pm = PlantedModel(kind="line", n_in=300, sigma=3.0 if sigma is None else sigma,
                      params={"p0": [50, 120], "p1": [650, 580]})
    return ScenarioSpec(name="single-line", model_id="line2d", region=IMAGE, planted=[pm], n_out=350, seed=seed)


def _planes(seed: int, sigma: Optional[float]) -> ScenarioSpec:
    planted = [
        PlantedModel(kind="plane", n_in=300, sigma=0.05, params={"center": [5, 5, 2], "normal": [0, 0, 1], "size": [8, 8]}),
        PlantedModel(kind="plane", n_in=250, sigma=0.08, params={"center": [2, 5, 6], "normal": [1, 0, 0], "size": [8, 6]}),
        PlantedModel(kind="plane", n_in=200, sigma=0.1, params={"center": [6.5, 6, 6], "normal": [1, 1, 1], "size": [4, 4]}),
    ]
    return ScenarioSpec(name="planes-3d", model_id="plane3d", region=BOX, planted=planted, n_out=300, seed=seed)


def _spheres(seed: int, sigma: Optional[float]) -> ScenarioSpec:
    planted = [
        PlantedModel(kind="sphere", n_in=300, sigma=0.05, params={"center": [3, 3, 3], "radius": 2.0}),
        PlantedModel(kind="sphere", n_in=300, sigma=0.08, params={"center": [6.5, 6, 6], "radius": 2.5}),
    ]
    return ScenarioSpec(name="spheres-3d", model_id="sphere3d", region=BOX, planted=planted, n_out=300, seed=seed)


def _cylinders(seed: int, sigma: Optional[float]) -> ScenarioSpec:
    planted = [
        PlantedModel(kind="cylinder", n_in=400, sigma=0.01,
                     params={"center": [6, 6, 5], "axis": [0, 0, 1], "radius": 2.0, "length": 8.0}),
        PlantedModel(kind="cylinder", n_in=200, sigma=0.01,
                     params={"center": [2.5, 2.5, 5], "axis": [0, 0, 1], "radius": 1.0, "length": 8.0}),
    ]
    return ScenarioSpec(name="cylinders-3d", model_id="cylinder3d", region=BOX, planted=planted, n_out=100, seed=seed)


def _homographies(seed: int, sigma: Optional[float]) -> ScenarioSpec:
    s = 1.0 if sigma is None else sigma
    planted = [
        PlantedModel(kind="homography", n_in=200, sigma=s,
                     params={"H": [[1.05, 0.02, 30.0], [-0.03, 0.98, 20.0], [1e-5, 2e-5, 1.0]]}),
        PlantedModel(kind="homography", n_in=150, sigma=s,
                     params={"H": [[0.9, -0.1, 80.0], [0.08, 1.02, -40.0], [-2e-5, 1e-5, 1.0]]}),
    ]
    return ScenarioSpec(name="homography-pair", model_id="homography", region=IMAGE, planted=planted, n_out=150, seed=seed)


def _fundamentals(seed: int, sigma: Optional[float]) -> ScenarioSpec:
    s = 0.5 if sigma is None else sigma
    planted = [
        PlantedModel(kind="fundamental", n_in=200, sigma=s,
                     params={"rotation_deg": [0, 5, 0], "translation": [1.0, 0.0, 0.1], "depth": [5, 15]}),
        PlantedModel(kind="fundamental", n_in=150, sigma=s,
                     params={"rotation_deg": [2, -4, 1], "translation": [-0.5, 0.3, 0.0], "depth": [4, 10]}),
    ]
    return ScenarioSpec(name="fundamental-pair", model_id="fundamental", region=IMAGE, planted=planted, n_out=150, seed=seed)


PRESETS: Dict[str, Callable[[int, Optional[float]], ScenarioSpec]] = {
    "five-lines": _lines,
    "three-ellipses": lambda seed, sigma: _ellipses(THREE_ELLIPSES, 350, "three-ellipses", seed),
    "three-ellipses-800": lambda seed, sigma: _ellipses(THREE_ELLIPSES, 800, "three-ellipses-800", seed),
    "two-ellipses": lambda seed, sigma: _ellipses(TWO_ELLIPSES, 200, "two-ellipses", seed),
    "circle-small": _circle(50.0, "circle-small"),
    "circle-large": _circle(200.0, "circle-large"),
    "single-line": _single_line,
    "planes-3d": _planes,
    "spheres-3d": _spheres,
    "cylinders-3d": _cylinders,
    "homography-pair": _homographies,
    "fundamental-pair": _fundamentals,
}

# Names used by the command-line contract.
PRESETS["two-ellipses-fig3"] = PRESETS["two-ellipses"]
PRESETS["circle-limit-fig5"] = PRESETS["circle-small"]


def preset(name: str, seed: int = 0, sigma: Optional[float] = None) -> ScenarioSpec:
    try:
        builder = PRESETS[name]
    except KeyError:
        raise InvalidInputError(f"unknown scenario preset {name!r}; expected one of {', '.join(PRESETS)}")
    return builder(seed, sigma)
