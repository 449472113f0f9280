"""PyTorch implementation of the classifier interface."""

from __future__ import annotations

import threading

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import UnsupportedCapabilityError
from ..validation import check_image, check_label
from .base import CamFeatures, ClassifierHandle


class TorchClassifier(ClassifierHandle):
    """Wraps an ``nn.Module`` that maps a normalized image batch to logits.

    The module is held in eval mode on CPU by default. Inputs arrive as
    (H, W, C) arrays in [0, 1]; resizing to ``input_size`` (bilinear) and
    mean/std normalization happen inside, so gradients returned by
    ``loss_gradient`` are in pixel space at the original resolution.
    """

    def __init__(
        self,
        module: torch.nn.Module,
        name: str,
        num_classes: int,
        input_size: tuple[int, int] | None = None,
        mean=None,
        std=None,
        cam_layer: str | None = None,
        in_channels: int = 3,
        device: str = "cpu",
    ):
        self.name = name
        self.num_classes = int(num_classes)
        self.input_size = tuple(input_size) if input_size is not None else None
        self.cam_layer = cam_layer
        self.cam_capable = cam_layer is not None
        self.in_channels = int(in_channels)
        self.thread_safe = True
        self._cam_lock = threading.Lock()
        self.device = torch.device(device)
        self.module = module.to(self.device).eval()
        for p in self.module.parameters():
            p.requires_grad_(False)
        self._dtype = next(self.module.parameters()).dtype
        shape = (1, self.in_channels, 1, 1)
        if mean is None:
            mean = [0.0] * self.in_channels
        if std is None:
            std = [1.0] * self.in_channels
        self._mean = torch.tensor(mean, dtype=self._dtype, device=self.device).reshape(shape)
        self._std = torch.tensor(std, dtype=self._dtype, device=self.device).reshape(shape)

    # -- internals ----------------------------------------------------------

    def _to_tensor(self, img: np.ndarray) -> torch.Tensor:
        img = check_image(img)
        if img.shape[2] != self.in_channels:
            raise ValueError(
                f"{self.name} expects {self.in_channels}-channel input, got {img.shape[2]}"
            )
        t = torch.from_numpy(np.ascontiguousarray(img)).to(self._dtype)
        return t.permute(2, 0, 1).unsqueeze(0).to(self.device)

    def _forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.input_size is not None and tuple(x.shape[-2:]) != self.input_size:
            x = F.interpolate(x, size=self.input_size, mode="bilinear", align_corners=False)
        x = (x - self._mean) / self._std
        return self.module(x)

    # -- ClassifierHandle ----------------------------------------------------

    def predict(self, img: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            logits = self._forward(self._to_tensor(img))
        probs = F.softmax(logits[0].double(), dim=0)
        return probs.cpu().numpy()

    def loss(self, img: np.ndarray, label: int) -> float:
        label = check_label(label, self.num_classes)
        with torch.no_grad():
            logits = self._forward(self._to_tensor(img))
            loss = F.cross_entropy(logits, torch.tensor([label], device=self.device))
        return float(loss)

    def loss_gradient(self, img: np.ndarray, label: int) -> np.ndarray:
        label = check_label(label, self.num_classes)
        x = self._to_tensor(img).requires_grad_(True)
        logits = self._forward(x)
        loss = F.cross_entropy(logits, torch.tensor([label], device=self.device))
        (grad,) = torch.autograd.grad(loss, x)
        return grad[0].permute(1, 2, 0).detach().cpu().double().numpy()

    def cam_features(self, img: np.ndarray) -> CamFeatures:
        if not self.cam_capable:
            raise UnsupportedCapabilityError(
                f"{self.name} has no cam_layer; cannot produce CAM features"
            )
        feature_module = self.module.get_submodule(self.cam_layer)
        captured: list[torch.Tensor] = []

        def hook(_module, _inputs, output):
            captured.append(output)

        # The hook lives on the shared module, so concurrent hooked forwards
        # would cross-capture; serialize just this path.
        with self._cam_lock:
            handle = feature_module.register_forward_hook(hook)
            try:
                with torch.no_grad():
                    self._forward(self._to_tensor(img))
            finally:
                handle.remove()
        if not captured:
            raise UnsupportedCapabilityError(
                f"{self.name}: cam_layer {self.cam_layer!r} produced no output"
            )
        maps = captured[-1][0].detach().cpu().double().numpy()
        linear = self._final_linear()
        weights = linear.weight.detach().cpu().double().numpy()
        return CamFeatures(feature_maps=maps, class_weights=weights)

    def _final_linear(self) -> torch.nn.Linear:
        last = None
        for m in self.module.modules():
            if isinstance(m, torch.nn.Linear):
                last = m
        if last is None:
            raise UnsupportedCapabilityError(
                f"{self.name} has no final Linear layer; not CAM-compatible"
            )
        return last
