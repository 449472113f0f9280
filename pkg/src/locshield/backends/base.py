"""Classifier abstraction: probabilities, input-space gradients, CAM features."""

from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

from ..validation import check_image, check_label


@dataclass(frozen=True)
class CamFeatures:
    """Inputs to class activation mapping.

    Attributes:
        feature_maps: (C', h', w') spatial maps from the final conv stage.
        class_weights: (num_classes, C') weights of the final linear layer.
    """

    feature_maps: np.ndarray
    class_weights: np.ndarray

    def __post_init__(self):
        if self.feature_maps.ndim != 3:
            raise ValueError(f"feature_maps must be (C', h', w'), got {self.feature_maps.shape}")
        if self.class_weights.ndim != 2:
            raise ValueError(f"class_weights must be 2-D, got {self.class_weights.shape}")
        if self.class_weights.shape[1] != self.feature_maps.shape[0]:
            raise ValueError(
                f"class_weights width {self.class_weights.shape[1]} does not match "
                f"{self.feature_maps.shape[0]} feature maps"
            )


class ClassifierHandle(abc.ABC):
    """A named differentiable classifier over [0, 1] pixel-space images.

    Any internal resizing or normalization happens behind this interface, so
    probabilities and gradients are always expressed at the image's own
    resolution and in raw pixel units.
    """

    name: str
    num_classes: int
    #: (height, width) the wrapped model expects, or None for size-agnostic.
    input_size: tuple[int, int] | None
    cam_capable: bool
    #: safe for concurrent read-only inference from multiple workers
    thread_safe: bool = True

    @abc.abstractmethod
    def predict(self, img: np.ndarray) -> np.ndarray:
        """Return a probability vector of length num_classes (sums to 1)."""

    @abc.abstractmethod
    def loss_gradient(self, img: np.ndarray, label: int) -> np.ndarray:
        """Gradient of the cross-entropy loss at ``label`` w.r.t. every pixel.

        Shape matches ``img``; the chain rule runs through any internal
        normalization and resizing.
        """

    @abc.abstractmethod
    def cam_features(self, img: np.ndarray) -> CamFeatures:
        """Final-conv feature maps plus final linear weights for CAM."""

    def loss(self, img: np.ndarray, label: int) -> float:
        """Cross-entropy of ``predict`` at ``label``."""
        p = self.predict(img)[check_label(label, self.num_classes)]
        return float(-np.log(max(p, 1e-300)))


def check_ensemble(models) -> tuple[ClassifierHandle, ...]:
    """Validate a model ensemble: non-empty, shared label vocabulary."""
    members = tuple(models)
    if not members:
        raise ValueError("ensemble must contain at least one model")
    n = members[0].num_classes
    for m in members[1:]:
        if m.num_classes != n:
            raise ValueError(
                f"ensemble members disagree on class count: {m.name} has "
                f"{m.num_classes}, expected {n}"
            )
    return members


def top_k(pred: np.ndarray, k: int) -> list[int]:
    """Indices of the k highest probabilities, descending; ties -> lower index."""
    pred = np.asarray(pred, dtype=np.float64)
    if pred.ndim != 1:
        raise ValueError(f"prediction vector must be 1-D, got shape {pred.shape}")
    if not 1 <= k <= pred.shape[0]:
        raise ValueError(f"k must be in 1..{pred.shape[0]}, got {k}")
    order = np.argsort(-pred, kind="stable")
    return [int(i) for i in order[:k]]


def cam(model: ClassifierHandle, img: np.ndarray, class_id: int) -> np.ndarray:
    """Class activation map for ``class_id``, normalized to [0, 1] at image size.

    Weighted sum of the final-conv maps, negative evidence clamped to 0,
    bilinear upsample to the image's height/width, then min-max normalized.
    An all-zero map stays all zeros; a constant positive map maps to all ones.
    """
    img = check_image(img)
    class_id = check_label(class_id, model.num_classes)
    feats = model.cam_features(img)
    weighted = np.tensordot(feats.class_weights[class_id], feats.feature_maps, axes=1)
    weighted = np.maximum(weighted, 0.0)
    up = _bilinear_resize(weighted, img.shape[0], img.shape[1])
    lo, hi = up.min(), up.max()
    if hi == lo:
        return np.zeros_like(up) if hi == 0.0 else np.ones_like(up)
    return (up - lo) / (hi - lo)


def _bilinear_resize(plane: np.ndarray, height: int, width: int) -> np.ndarray:
    if plane.shape == (height, width):
        return np.asarray(plane, dtype=np.float64)
    import torch
    import torch.nn.functional as F

    t = torch.as_tensor(plane, dtype=torch.float64)[None, None]
    out = F.interpolate(t, size=(height, width), mode="bilinear", align_corners=False)
    return out[0, 0].numpy()
