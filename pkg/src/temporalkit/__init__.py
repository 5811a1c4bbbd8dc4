"""temporalkit: a desk-scale, fully differentiable temporal-modeling toolkit
for multi-label video recognition, with manually derived backward passes,
deterministic training, and a verifiable synthetic benchmark."""

__version__ = "0.1.0"

from .model import ModelConfig, ParamStore, backbone_forward, init_params, predict_clip
from .temporal import GroupSpec, InterlaceParams, ShiftSpec

__all__ = [
    "ModelConfig",
    "ParamStore",
    "backbone_forward",
    "init_params",
    "predict_clip",
    "GroupSpec",
    "InterlaceParams",
    "ShiftSpec",
    "__version__",
]
