from typing import Callable, Dict, Tuple

from misre.core.errors import InvalidInputError

from .base import GeometryModel
from .conics import Ellipse2D
from .epipolar import Fundamental, Homography
from .linear import Line2D, Plane3D
from .quadrics import Cylinder3D, Sphere3D

MODELS: Dict[str, Callable[[], GeometryModel]] = {
    "line2d": Line2D,
    "plane3d": Plane3D,
    "ellipse2d": Ellipse2D,
    "sphere3d": Sphere3D,
    "cylinder3d": Cylinder3D,
    "fundamental": Fundamental,
    "homography": Homography,
}

MODEL_IDS: Tuple[str, ...] = tuple(MODELS)


def get_model(model_id: str) -> GeometryModel:
    try:
        factory = MODELS[model_id]
    except KeyError:
        raise InvalidInputError(f"unknown model {model_id!r}; expected one of {', '.join(MODEL_IDS)}")
    return factory()
