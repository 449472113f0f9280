"""Protection-mask builders: CAM union/intersection, texture/non-texture, full.

CAM masks target regions the trained models themselves attend to; human-vision
masks split the image into edge texture (attention-attracting) and its smooth
complement. All builders return binary masks ({0, 1}) at image resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .backends.base import cam, check_ensemble, top_k
from .canny import blur_kernel_size, canny, gaussian_blur
from .errors import UnsupportedCapabilityError
from .image_ops import to_grayscale
from .validation import check_image

STRATEGIES = ("cam_union", "cam_intersection", "hv_texture", "hv_nontexture", "entire_image")
CAM_CLASS_MODES = ("true_class", "top5_union")


@dataclass(frozen=True)
class MaskRecipe:
    """Parameters selecting and tuning a protection-mask strategy."""

    strategy: str = "cam_union"
    cam_threshold: float = 0.4
    cam_classes: str = "true_class"
    canny_low: float = 0.1
    canny_high: float = 0.2
    blur_sigma: float = 1.4
    dilation_radius: int = 2
    dilation_iterations: int = 3

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if not 0.0 < self.cam_threshold < 1.0:
            raise ValueError(f"cam_threshold must be in (0, 1), got {self.cam_threshold}")
        if self.cam_classes not in CAM_CLASS_MODES:
            raise ValueError(f"cam_classes must be one of {CAM_CLASS_MODES}")
        if not self.canny_low < self.canny_high:
            raise ValueError("canny_low must be below canny_high")
        if self.dilation_radius < 0 or self.dilation_iterations < 0:
            raise ValueError("dilation parameters must be non-negative")


def model_cams(ensemble, img: np.ndarray, label: int, cam_classes: str = "true_class") -> list[np.ndarray]:
    """One continuous [0, 1] activation map per ensemble member.

    With ``top5_union`` each member contributes the pointwise max over the
    CAMs of its own top-5 predicted classes instead of the true class only.
    """
    members = check_ensemble(ensemble)
    not_capable = [m.name for m in members if not m.cam_capable]
    if not_capable:
        raise UnsupportedCapabilityError(f"models without CAM support: {not_capable}")
    img = check_image(img)
    maps = []
    for model in members:
        if cam_classes == "true_class":
            classes = [label]
        else:
            classes = top_k(model.predict(img), min(5, model.num_classes))
        stack = [cam(model, img, c) for c in classes]
        maps.append(np.maximum.reduce(stack))
    return maps


def combine_cam_masks(cams, threshold: float, strategy: str) -> np.ndarray:
    """Binarize per-model CAMs at ``threshold`` and combine by max or min."""
    binarized = [(c >= threshold).astype(np.float64) for c in cams]
    if strategy == "cam_union":
        return np.maximum.reduce(binarized)
    if strategy == "cam_intersection":
        return np.minimum.reduce(binarized)
    raise ValueError(f"not a CAM strategy: {strategy!r}")


def build_cam_mask(ensemble, img: np.ndarray, label: int, recipe: MaskRecipe) -> np.ndarray:
    """Binary union/intersection of per-model CAM regions."""
    cams = model_cams(ensemble, img, label, cam_classes=recipe.cam_classes)
    return combine_cam_masks(cams, recipe.cam_threshold, recipe.strategy)


def build_hv_mask(img: np.ndarray, recipe: MaskRecipe) -> np.ndarray:
    """Texture mask from dilated Canny edges, or its complement.

    Pipeline: grayscale -> Gaussian blur -> Canny -> binary dilation.
    """
    if recipe.strategy not in ("hv_texture", "hv_nontexture"):
        raise ValueError(f"not a human-vision strategy: {recipe.strategy!r}")
    img = check_image(img)
    gray = to_grayscale(img)
    kernel = blur_kernel_size(recipe.blur_sigma)
    if min(gray.shape) < kernel:
        raise ValueError(
            f"image {gray.shape} is smaller than the {kernel}x{kernel} blur kernel"
        )
    edges = canny(gaussian_blur(gray, recipe.blur_sigma), recipe.canny_low, recipe.canny_high)
    texture = _dilate(edges > 0, recipe.dilation_radius, recipe.dilation_iterations)
    if recipe.strategy == "hv_texture":
        return texture.astype(np.float64)
    return (~texture).astype(np.float64)


def build_entire_mask(img: np.ndarray) -> np.ndarray:
    """All-ones mask; MM-PGD with it reduces to plain M-PGD."""
    img = check_image(img)
    return np.ones(img.shape[:2], dtype=np.float64)


def build_mask(
    img: np.ndarray,
    recipe: MaskRecipe,
    ensemble=None,
    label: int | None = None,
) -> np.ndarray:
    """Dispatch on ``recipe.strategy``; CAM strategies need ensemble and label."""
    if recipe.strategy == "entire_image":
        return build_entire_mask(img)
    if recipe.strategy in ("hv_texture", "hv_nontexture"):
        return build_hv_mask(img, recipe)
    if ensemble is None or label is None:
        raise ValueError(f"strategy {recipe.strategy!r} requires an ensemble and a label")
    return build_cam_mask(ensemble, img, label, recipe)


def cam_coverage_sweep(ensemble, images, labels, thresholds, cam_classes: str = "true_class"):
    """Mean union/intersection coverage per threshold over a sample of images.

    Returns rows ``(threshold, union_coverage, intersection_coverage)`` for
    calibrating ``cam_threshold`` toward a target coverage regime.
    """
    all_cams = [model_cams(ensemble, img, lab, cam_classes) for img, lab in zip(images, labels)]
    rows = []
    for threshold in thresholds:
        union_cov, inter_cov = [], []
        for cams in all_cams:
            union_cov.append(combine_cam_masks(cams, threshold, "cam_union").mean())
            inter_cov.append(combine_cam_masks(cams, threshold, "cam_intersection").mean())
        rows.append((float(threshold), float(np.mean(union_cov)), float(np.mean(inter_cov))))
    return rows


def _dilate(mask: np.ndarray, radius: int, iterations: int) -> np.ndarray:
    if radius == 0 or iterations == 0:
        return mask
    return ndimage.binary_dilation(mask, structure=_disk(radius), iterations=iterations)


def _disk(radius: int) -> np.ndarray:
    r = np.arange(-radius, radius + 1)
    yy, xx = np.meshgrid(r, r, indexing="ij")
    return (yy * yy + xx * xx) <= radius * radius
