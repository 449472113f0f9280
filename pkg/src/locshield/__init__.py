"""Bounded-perturbation protection of images against location classifiers.

The pieces, bottom to top: ``image_ops`` (pixel-space algebra and IO),
``backends`` (classifier handles), ``attacks`` (the perturbation methods),
``masks`` (CAM and edge-texture protection masks), ``metrics`` (accuracy,
protection rate, SSIM), ``harness`` (campaigns and reports), ``protector``
(estimator-style front door), ``cli``/``desk`` (command-line tools).
"""

from .attacks import (
    METHODS,
    AttackResult,
    fgsm,
    m_pgd,
    mm_pgd,
    no_attack,
    pgd,
    random_noise,
    run_method,
)
from .backends import ClassifierHandle, TorchClassifier, cam, load_backend, top_k
from .errors import ShapeMismatchError, UndefinedMetricError, UnsupportedCapabilityError
from .harness import (
    CampaignConfig,
    CampaignReport,
    DatasetManifest,
    ManifestEntry,
    load_manifest,
    run_campaign,
    sample_correct_subset,
    transferability_table,
)
from .image_ops import PerturbationConfig, load_image, save_image
from .masks import STRATEGIES, MaskRecipe, build_mask
from .metrics import EvalRecord, MetricSummary, protection_rate, ssim, summarize, top_k_accuracy
from .protector import MaskGuidedProtector

__version__ = "0.1.0"

__all__ = [
    "METHODS",
    "STRATEGIES",
    "AttackResult",
    "CampaignConfig",
    "CampaignReport",
    "ClassifierHandle",
    "DatasetManifest",
    "EvalRecord",
    "ManifestEntry",
    "MaskGuidedProtector",
    "MaskRecipe",
    "MetricSummary",
    "PerturbationConfig",
    "ShapeMismatchError",
    "TorchClassifier",
    "UndefinedMetricError",
    "UnsupportedCapabilityError",
    "cam",
    "fgsm",
    "load_backend",
    "load_image",
    "load_manifest",
    "m_pgd",
    "mm_pgd",
    "no_attack",
    "pgd",
    "protection_rate",
    "random_noise",
    "run_campaign",
    "run_method",
    "sample_correct_subset",
    "save_image",
    "ssim",
    "summarize",
    "top_k",
    "top_k_accuracy",
    "transferability_table",
    "build_mask",
]
