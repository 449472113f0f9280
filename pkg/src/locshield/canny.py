"""Canny edge detection: Sobel gradients, non-maximum suppression, hysteresis.

Thresholds apply to the gradient magnitude normalized into [0, 1] by its
maximum, so they stay meaningful across images of different contrast.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage


def gaussian_blur(gray: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return np.asarray(gray, dtype=np.float64)
    return ndimage.gaussian_filter(np.asarray(gray, dtype=np.float64), sigma, mode="nearest")


def blur_kernel_size(sigma: float) -> int:
    """Side length of the Gaussian kernel scipy uses (truncate = 4 sigma)."""
    if sigma <= 0:
        return 1
    return 2 * int(4.0 * sigma + 0.5) + 1


def canny(gray: np.ndarray, low: float, high: float) -> np.ndarray:
    """Binary edge map of a 2-D image; ``low``/``high`` in [0, 1] relative units."""
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2:
        raise ValueError(f"canny expects a 2-D image, got shape {gray.shape}")
    if not 0 <= low < high:
        raise ValueError(f"thresholds must satisfy 0 <= low < high, got {low}, {high}")

    gx = ndimage.sobel(gray, axis=1, mode="nearest")
    gy = ndimage.sobel(gray, axis=0, mode="nearest")
    magnitude = np.hypot(gx, gy)
    peak = magnitude.max()
    if peak == 0.0:
        return np.zeros_like(gray)
    magnitude /= peak

    thinned = _non_maximum_suppression(magnitude, gx, gy)
    strong = thinned >= high
    weak = thinned >= low
    return _hysteresis(strong, weak).astype(np.float64)


def _non_maximum_suppression(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    # Quantize gradient direction into 4 sectors and keep pixels that are
    # at least as large as both neighbors along the gradient axis.
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    padded = np.pad(mag, 1, mode="constant")

    def shifted(dr: int, dc: int) -> np.ndarray:
        return padded[1 + dr : 1 + dr + mag.shape[0], 1 + dc : 1 + dc + mag.shape[1]]

    horizontal = (angle < 22.5) | (angle >= 157.5)
    diag_down = (angle >= 22.5) & (angle < 67.5)
    vertical = (angle >= 67.5) & (angle < 112.5)
    diag_up = (angle >= 112.5) & (angle < 157.5)

    keep = np.zeros_like(mag, dtype=bool)
    keep |= horizontal & (mag >= shifted(0, 1)) & (mag >= shifted(0, -1))
    keep |= diag_down & (mag >= shifted(1, 1)) & (mag >= shifted(-1, -1))
    keep |= vertical & (mag >= shifted(1, 0)) & (mag >= shifted(-1, 0))
    keep |= diag_up & (mag >= shifted(1, -1)) & (mag >= shifted(-1, 1))
    return np.where(keep, mag, 0.0)


def _hysteresis(strong: np.ndarray, weak: np.ndarray) -> np.ndarray:
    labels, count = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    if count == 0:
        return np.zeros_like(strong)
    keep_ids = np.unique(labels[strong])
    keep_ids = keep_ids[keep_ids != 0]
    return np.isin(labels, keep_ids)
