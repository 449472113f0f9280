"""Pixel-space algebra and image/mask file IO.

All arithmetic happens in normalized [0, 1] pixel space; the L-infinity
budget epsilon is always expressed in these units regardless of what any
classifier does internally.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ShapeMismatchError
from .validation import check_mask, check_same_shape

STEP_POLICIES = ("full-step", "conventional")

# BT.601 luma weights, shared by the SSIM metric and the edge pipeline.
_LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)


@dataclass(frozen=True)
class PerturbationConfig:
    """Budget and schedule for an L-infinity attack.

    Attributes:
        epsilon: L-infinity bound in normalized pixel units, in (0, 1].
        steps: number of gradient iterations t, 1..1000.
        step_size: per-iteration step; None resolves via ``step_policy``.
        step_policy: "full-step" uses step = epsilon per iteration and
            leans on projection, "conventional" uses epsilon / 4.
        random_init: start from a random point inside the epsilon ball.
        restarts: independent chains; the highest final-loss chain wins.
        rng_seed: seed making the whole attack deterministic.
    """

    epsilon: float = 0.03
    steps: int = 20
    step_size: float | None = None
    step_policy: str = "full-step"
    random_init: bool = True
    restarts: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if not 1 <= int(self.steps) <= 1000:
            raise ValueError(f"steps must be in 1..1000, got {self.steps}")
        if self.step_policy not in STEP_POLICIES:
            raise ValueError(f"step_policy must be one of {STEP_POLICIES}")
        if self.step_size is not None:
            if self.step_size <= 0:
                raise ValueError("step_size must be positive")
            if self.step_policy == "full-step" and self.step_size > self.epsilon:
                raise ValueError("full-step policy requires step_size <= epsilon")
        if int(self.restarts) < 1:
            raise ValueError("restarts must be >= 1")

    def resolved_step_size(self) -> float:
        if self.step_size is not None:
            return float(self.step_size)
        if self.step_policy == "full-step":
            return float(self.epsilon)
        return float(self.epsilon) / 4.0


def clip_pixels(img: np.ndarray) -> np.ndarray:
    """Clamp every value into [0, 1]; shape is preserved."""
    return np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)


def project_linf(candidate: np.ndarray, origin: np.ndarray, epsilon: float) -> np.ndarray:
    """Project ``candidate`` onto the epsilon ball around ``origin``, then into [0, 1].

    The result is the elementwise nearest point satisfying both constraints.
    """
    candidate = np.asarray(candidate, dtype=np.float64)
    origin = np.asarray(origin, dtype=np.float64)
    check_same_shape(candidate, origin, "candidate and origin")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    delta = np.clip(candidate - origin, -epsilon, epsilon)
    return np.clip(origin + delta, 0.0, 1.0)


def apply_masked_step(
    current: np.ndarray,
    grad_sign: np.ndarray,
    mask: np.ndarray,
    step_size: float,
) -> np.ndarray:
    """Return ``current + mask * step_size * grad_sign`` without any clipping.

    The mask is 2-D and broadcasts across channels; callers project afterwards.
    """
    current = np.asarray(current, dtype=np.float64)
    grad_sign = np.asarray(grad_sign, dtype=np.float64)
    check_same_shape(current, grad_sign, "current and grad_sign")
    mask = check_mask(mask, shape=current.shape[:2])
    return current + mask[:, :, None] * (step_size * grad_sign)


def mask_union(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise max of two masks."""
    a, b = check_mask(a, name="a"), check_mask(b, name="b")
    check_same_shape(a, b, "masks")
    return np.maximum(a, b)


def mask_intersection(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise min of two masks."""
    a, b = check_mask(a, name="a"), check_mask(b, name="b")
    check_same_shape(a, b, "masks")
    return np.minimum(a, b)


def mask_invert(m: np.ndarray) -> np.ndarray:
    """Complement 1 - m."""
    return 1.0 - check_mask(m)


def mask_coverage(m: np.ndarray) -> float:
    """Mean mask value; fraction of covered pixels for a binary mask."""
    return float(check_mask(m).mean())


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Collapse an (H, W, C) image to a 2-D luminance plane (BT.601 for RGB)."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim != 3:
        raise ValueError(f"expected (H, W, C) image, got shape {img.shape}")
    if img.shape[2] == 1:
        return img[:, :, 0]
    if img.shape[2] == 3:
        return img @ _LUMA_WEIGHTS
    raise ValueError(f"expected 1 or 3 channels, got {img.shape[2]}")


# ---------------------------------------------------------------------------
# File IO. Adversarial outputs must survive a round trip, so writes are PNG
# only; JPEG is tolerated on the way in because user photos often are.
# ---------------------------------------------------------------------------


def load_image(path) -> np.ndarray:
    """Load an image file as an (H, W, C) float64 array in [0, 1]."""
    with Image.open(path) as im:
        if im.format == "JPEG":
            warnings.warn(
                f"{path}: JPEG input is lossy; protected outputs are written as PNG",
                stacklevel=2,
            )
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.float64)[:, :, None]
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_image(img: np.ndarray, path) -> None:
    """Write an image as 8-bit PNG (lossless; refuses other extensions)."""
    path = str(path)
    if not path.lower().endswith(".png"):
        raise ValueError(f"adversarial images must be saved as PNG, got {path!r}")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"expected (H, W, 1|3) image, got shape {img.shape}")
    data = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    if data.shape[2] == 1:
        Image.fromarray(data[:, :, 0], mode="L").save(path, format="PNG")
    else:
        Image.fromarray(data, mode="RGB").save(path, format="PNG")


def load_mask(path) -> np.ndarray:
    """Load a grayscale PNG as a 2-D mask in [0, 1] (0 -> 0.0, 255 -> 1.0)."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    return arr / 255.0


def save_mask(mask: np.ndarray, path) -> None:
    """Write a mask as single-channel 8-bit grayscale PNG."""
    path = str(path)
    if not path.lower().endswith(".png"):
        raise ValueError(f"masks must be saved as PNG, got {path!r}")
    mask = check_mask(mask)
    data = np.round(mask * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path, format="PNG")
