from .base import (
    CarrierSet,
    GeometryModel,
    Hypothesis,
    InputPoint,
    ModelSpec,
    NormalizationTransform,
)
from .registry import MODEL_IDS, get_model

__all__ = [
    "CarrierSet",
    "GeometryModel",
    "Hypothesis",
    "InputPoint",
    "ModelSpec",
    "NormalizationTransform",
    "MODEL_IDS",
    "get_model",
]
