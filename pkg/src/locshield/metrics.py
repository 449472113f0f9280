"""Evaluation records, top-k accuracy, protection rate, and SSIM.

Accuracy and protection rate expose integer-count variants alongside the
float ratios; the counts are what the 1 - accuracy identity holds over
exactly, so downstream code can verify it in rational arithmetic.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import correlate2d

from .errors import UndefinedMetricError
from .image_ops import to_grayscale
from .validation import check_image, check_same_shape

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_DYNAMIC_RANGE = 1.0


@dataclass(frozen=True)
class EvalRecord:
    """Outcome of one (image, classifier) evaluation after an attack.

    ``clean_topk`` and ``adv_topk`` are descending-confidence class ids for
    the clean and protected image; they must be at least as long as any k
    the record is later scored at.
    """

    image_id: str
    true_label: int
    clean_topk: tuple[int, ...]
    adv_topk: tuple[int, ...]
    ssim: float | None
    classifier: str

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "EvalRecord":
        return cls(
            image_id=str(data["image_id"]),
            true_label=int(data["true_label"]),
            clean_topk=tuple(int(c) for c in data["clean_topk"]),
            adv_topk=tuple(int(c) for c in data["adv_topk"]),
            ssim=None if data.get("ssim") is None else float(data["ssim"]),
            classifier=str(data["classifier"]),
        )


@dataclass(frozen=True)
class MetricSummary:
    k: int
    accuracy: float
    protection_rate: float
    mean_ssim: float | None
    n_images: int
    n_clean_correct: int


def _check_k(records, k: int) -> None:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    short = [r.image_id for r in records if len(r.adv_topk) < k or len(r.clean_topk) < k]
    if short:
        raise ValueError(f"records with fewer than {k} ranked classes: {short[:5]}")


def top_k_counts(records, k: int, which: str = "adversarial") -> tuple[int, int]:
    """(hits, total) where a hit means the true label is in the top-k list."""
    records = list(records)
    _check_k(records, k)
    if which not in ("adversarial", "clean"):
        raise ValueError(f"which must be 'adversarial' or 'clean', got {which!r}")
    hits = 0
    for r in records:
        ranked = r.adv_topk if which == "adversarial" else r.clean_topk
        hits += int(r.true_label in ranked[:k])
    return hits, len(records)


def top_k_accuracy(records, k: int, which: str = "adversarial") -> float:
    hits, total = top_k_counts(records, k, which)
    if total == 0:
        raise UndefinedMetricError("top-k accuracy over zero records is undefined")
    return hits / total


def protection_counts(records, k: int) -> tuple[int, int]:
    """(protected, clean_correct) at top-k.

    An image counts as protected when the classifier ranked the true label
    in its clean top-k but no longer does after the attack. Images the
    classifier got wrong to begin with are excluded from both counts.
    """
    records = list(records)
    _check_k(records, k)
    clean_correct = 0
    protected = 0
    for r in records:
        if r.true_label not in r.clean_topk[:k]:
            continue
        clean_correct += 1
        protected += int(r.true_label not in r.adv_topk[:k])
    return protected, clean_correct


def protection_rate(records, k: int) -> float:
    protected, clean_correct = protection_counts(records, k)
    if clean_correct == 0:
        raise UndefinedMetricError(
            "protection rate is undefined: no record was correctly classified before the attack"
        )
    return protected / clean_correct


def summarize(records, k: int) -> MetricSummary:
    """Accuracy, protection rate, and mean SSIM for one classifier's records."""
    records = list(records)
    if not records:
        raise UndefinedMetricError("cannot summarize zero records")
    hits, total = top_k_counts(records, k)
    protected, clean_correct = protection_counts(records, k)
    if clean_correct == 0:
        raise UndefinedMetricError(
            "protection rate is undefined: no record was correctly classified before the attack"
        )
    ssim_values = [r.ssim for r in records if r.ssim is not None]
    return MetricSummary(
        k=k,
        accuracy=hits / total,
        protection_rate=protected / clean_correct,
        mean_ssim=float(np.mean(ssim_values)) if ssim_values else None,
        n_images=total,
        n_clean_correct=clean_correct,
    )


# ---------------------------------------------------------------------------
# SSIM. Standard single-scale form: 11x11 Gaussian window (sigma 1.5),
# K1=0.01, K2=0.03 on a [0, 1] dynamic range, biased (weighted-mean)
# covariance, averaged over fully valid windows only. Color images are
# compared on the BT.601 luminance plane.
# ---------------------------------------------------------------------------


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _windowed_mean(plane: np.ndarray, window: np.ndarray) -> np.ndarray:
    return correlate2d(plane, window, mode="valid")


def ssim(reference: np.ndarray, distorted: np.ndarray) -> float:
    """Structural similarity between two images in [0, 1].

    Identical inputs score exactly 1.0: every windowed statistic is computed
    by the same expression for both images, so numerator and denominator of
    each local score are bitwise equal.
    """
    reference = check_image(reference)
    distorted = check_image(distorted)
    check_same_shape(reference, distorted, "reference and distorted")
    x = to_grayscale(reference)
    y = to_grayscale(distorted)
    if min(x.shape) < SSIM_WINDOW:
        raise ValueError(
            f"image {x.shape} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )
    window = _gaussian_window()
    c1 = (SSIM_K1 * SSIM_DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * SSIM_DYNAMIC_RANGE) ** 2

    mu_x = _windowed_mean(x, window)
    mu_y = _windowed_mean(y, window)
    var_x = _windowed_mean(x * x, window) - mu_x * mu_x
    var_y = _windowed_mean(y * y, window) - mu_y * mu_y
    cov_xy = _windowed_mean(x * y, window) - mu_x * mu_y

    # 2.0 * (m) is grouped so that for identical inputs it doubles the same
    # rounded product that m + m doubles in the denominator; both doublings
    # are exact, which is what makes ssim(x, x) == 1.0 hold bitwise.
    score = ((2.0 * (mu_x * mu_y) + c1) * (2.0 * cov_xy + c2)) / (
        (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    )
    return float(score.mean())
