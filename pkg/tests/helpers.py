"""Test doubles: analytic classifiers and a tiny registry-loadable CNN."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from torch import nn

from locshield.backends.base import CamFeatures, ClassifierHandle
from locshield.backends.registry import register_architecture, save_descriptor
from locshield.backends.torch_backend import TorchClassifier
from locshield.desk import DeskNet
from locshield.errors import UnsupportedCapabilityError


class LinearSoftmaxModel(ClassifierHandle):
    """softmax(W x + b) over flattened pixels; gradient is W^T (p - onehot)."""

    def __init__(self, name, weights, bias, image_shape, cam_capable=False):
        self.name = name
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        self.image_shape = tuple(image_shape)
        self.num_classes = self.weights.shape[0]
        self.input_size = self.image_shape[:2]
        self.cam_capable = cam_capable
        self.thread_safe = True

    def _logits(self, img):
        return self.weights @ np.asarray(img, dtype=np.float64).ravel() + self.bias

    def predict(self, img):
        z = self._logits(img)
        z = z - z.max()
        e = np.exp(z)
        return e / e.sum()

    def loss_gradient(self, img, label):
        p = self.predict(img)
        p[label] -= 1.0
        return (self.weights.T @ p).reshape(self.image_shape)

    def cam_features(self, img):
        raise UnsupportedCapabilityError(f"{self.name} has no CAM features")


class FixedCamModel(ClassifierHandle):
    """Serves preset probabilities and CAM features; for mask-logic tests."""

    def __init__(self, name, probabilities, feature_maps, class_weights):
        self.name = name
        self.probabilities = np.asarray(probabilities, dtype=np.float64)
        self.num_classes = self.probabilities.shape[0]
        self.input_size = None
        self.cam_capable = True
        self.thread_safe = True
        self._features = CamFeatures(
            feature_maps=np.asarray(feature_maps, dtype=np.float64),
            class_weights=np.asarray(class_weights, dtype=np.float64),
        )

    def predict(self, img):
        return self.probabilities

    def loss_gradient(self, img, label):
        return np.zeros_like(np.asarray(img, dtype=np.float64))

    def cam_features(self, img):
        return self._features


def make_linear_model(name, image_shape, num_classes, rng_seed=0, scale=1.0):
    rng = np.random.default_rng(rng_seed)
    n = int(np.prod(image_shape))
    weights = scale * rng.normal(size=(num_classes, n))
    bias = rng.normal(size=num_classes)
    return LinearSoftmaxModel(name, weights, bias, image_shape)


def random_image(rng, height=16, width=16, channels=3):
    return rng.uniform(0.0, 1.0, size=(height, width, channels))


def _build_tiny(num_classes: int) -> DeskNet:
    features = nn.Sequential(
        nn.Conv2d(3, 6, 3, padding=1), nn.ReLU(),
        nn.Conv2d(6, 10, 3, padding=1), nn.ReLU(),
    )
    return DeskNet(features, 10, num_classes)


register_architecture("test/tiny", _build_tiny, cam_layer="features")


def tiny_torch_classifier(name="tiny", num_classes=4, rng_seed=0, dtype=torch.float64):
    torch.manual_seed(rng_seed)
    module = _build_tiny(num_classes).to(dtype)
    return TorchClassifier(
        module,
        name=name,
        num_classes=num_classes,
        input_size=None,
        cam_layer="features",
    )


def write_tiny_descriptor(out_dir, name="tiny", num_classes=4, rng_seed=0):
    """Save weights + descriptor JSON for the registered test/tiny net."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(rng_seed)
    module = _build_tiny(num_classes)
    torch.save(module.state_dict(), out_dir / f"{name}.pt")
    path = out_dir / f"{name}.json"
    save_descriptor(
        {
            "name": name,
            "architecture": "test/tiny",
            "weights_uri": f"{name}.pt",
            "num_classes": num_classes,
            "input_size": [16, 16],
            "normalization_mean": [0.5, 0.5, 0.5],
            "normalization_std": [0.5, 0.5, 0.5],
            "cam_capable": True,
        },
        path,
    )
    return path
