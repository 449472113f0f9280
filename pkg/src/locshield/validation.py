"""Input validation helpers.

Images are H x W x C float arrays in [0, 1] with C in {1, 3} (RGB order).
Attention masks are H x W float arrays in [0, 1], broadcast across channels.
Every helper returns a float64 array so downstream pixel arithmetic keeps
enough headroom for tight L-infinity budget checks.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatchError

VALID_CHANNELS = (1, 3)


def check_image(img, name: str = "image") -> np.ndarray:
    """Validate an image array and return it as float64.

    Args:
        img: array-like of shape (H, W, C) with C in {1, 3}, values in [0, 1].
        name: label used in error messages.

    Raises:
        ValueError: wrong rank, channel count, non-finite or out-of-range values.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"{name} must have shape (H, W, C), got {arr.shape}")
    h, w, c = arr.shape
    if h < 1 or w < 1:
        raise ValueError(f"{name} must have positive height and width, got {arr.shape}")
    if c not in VALID_CHANNELS:
        raise ValueError(f"{name} must have 1 or 3 channels, got {c}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(
            f"{name} values must lie in [0, 1], got range "
            f"[{arr.min():.6g}, {arr.max():.6g}]"
        )
    return arr


def check_image_batch(images) -> list[np.ndarray]:
    """Validate a batch given as a 4-D array or a sequence of images."""
    arr = np.asarray(images, dtype=np.float64) if not isinstance(images, (list, tuple)) else images
    if isinstance(arr, np.ndarray):
        if arr.ndim == 3:
            return [check_image(arr)]
        if arr.ndim != 4:
            raise ValueError(f"image batch must have shape (N, H, W, C), got {arr.shape}")
        return [check_image(arr[i], name=f"image[{i}]") for i in range(arr.shape[0])]
    return [check_image(im, name=f"image[{i}]") for i, im in enumerate(arr)]


def check_mask(mask, shape: tuple[int, int] | None = None, name: str = "mask") -> np.ndarray:
    """Validate an attention mask (2-D, values in [0, 1]) and return it as float64."""
    arr = np.asarray(mask, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must have shape (H, W), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1]")
    if shape is not None and arr.shape != tuple(shape):
        raise ShapeMismatchError(f"{name} shape {arr.shape} does not match image plane {tuple(shape)}")
    return arr


def is_binary_mask(mask: np.ndarray) -> bool:
    """True when every mask value is exactly 0.0 or 1.0."""
    return bool(np.all((mask == 0.0) | (mask == 1.0)))


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "arrays") -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{what} must share a shape: {a.shape} vs {b.shape}")


def check_label(label: int, num_classes: int) -> int:
    label = int(label)
    if not 0 <= label < num_classes:
        raise ValueError(f"label {label} out of range for {num_classes} classes")
    return label
