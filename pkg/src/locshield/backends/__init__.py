from .base import CamFeatures, ClassifierHandle, cam, check_ensemble, top_k
from .registry import (
    load_backend,
    load_class_names,
    load_descriptor,
    register_architecture,
    save_class_names,
    save_descriptor,
)
from .torch_backend import TorchClassifier

__all__ = [
    "CamFeatures",
    "ClassifierHandle",
    "TorchClassifier",
    "cam",
    "check_ensemble",
    "load_backend",
    "load_class_names",
    "load_descriptor",
    "register_architecture",
    "save_class_names",
    "save_descriptor",
    "top_k",
]
