"""Estimator-style front door: images in, protected images out.

``MaskGuidedProtector`` follows the sklearn transformer conventions
(constructor stores parameters verbatim, ``fit`` validates and returns self,
``get_params``/``set_params`` come from ``BaseEstimator``), so it slots into
pipelines and parameter searches. The heavy lifting stays in ``attacks`` and
``masks``; this class only routes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .attacks import METHODS, AttackResult, run_method
from .backends.base import check_ensemble, top_k
from .harness import derive_image_seed
from .image_ops import PerturbationConfig
from .masks import MaskRecipe, build_mask
from .validation import check_image


class MaskGuidedProtector(BaseEstimator):
    """Applies one protection method to a batch of images.

    Parameters mirror the attack configuration: ``models`` is the white-box
    ensemble (a single handle is fine), ``mask_recipe`` only applies to the
    mask-guided method and defaults to the CAM-union recipe there.

    ``transform`` takes images without labels, so each image is attacked at
    the first model's own top-1 prediction; pass true labels to ``protect``
    when you have them.
    """

    def __init__(
        self,
        models=None,
        method: str = "mm_pgd",
        mask_recipe: MaskRecipe | None = None,
        epsilon: float = 0.03,
        steps: int = 20,
        step_policy: str = "full-step",
        random_init: bool = True,
        rng_seed: int = 0,
    ):
        self.models = models
        self.method = method
        self.mask_recipe = mask_recipe
        self.epsilon = epsilon
        self.steps = steps
        self.step_policy = step_policy
        self.random_init = random_init
        self.rng_seed = rng_seed

    def fit(self, X=None, y=None):
        """Validate parameters and the ensemble; no training happens here."""
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.method in ("random_noise", "no_attack"):
            self.models_ = ()
        else:
            self.models_ = check_ensemble(self.models)
            if self.method in ("fgsm", "pgd") and len(self.models_) != 1:
                raise ValueError(f"{self.method} attacks exactly one model")
        if self.method == "mm_pgd":
            self.mask_recipe_ = self.mask_recipe if self.mask_recipe is not None else MaskRecipe()
        elif self.mask_recipe is not None:
            raise ValueError(f"mask_recipe only applies to mm_pgd, not {self.method!r}")
        else:
            self.mask_recipe_ = None
        self.perturbation_ = PerturbationConfig(
            epsilon=self.epsilon,
            steps=self.steps,
            step_policy=self.step_policy,
            random_init=self.random_init,
        )
        return self

    def transform(self, X):
        """Protected copies of ``X``; container type (array or list) is kept."""
        results = self.protect(X)
        adv = [r.adversarial for r in results]
        if isinstance(X, np.ndarray) and X.ndim == 4:
            return np.stack(adv)
        return adv

    def fit_transform(self, X, y=None):
        return self.fit(X, y).transform(X)

    def protect(self, X, y=None) -> list[AttackResult]:
        """Full attack results for each image.

        ``y`` gives true labels; without it each image uses the first
        model's top-1 prediction as its target label.
        """
        if not hasattr(self, "models_"):
            raise RuntimeError("call fit before protect/transform")
        images = self._as_images(X)
        labels = self._resolve_labels(images, y)
        results = []
        for i, (img, label) in enumerate(zip(images, labels)):
            seed = derive_image_seed(self.rng_seed, str(i))
            results.append(self._protect_one(img, label, seed))
        return results

    # -- internals ----------------------------------------------------------

    @staticmethod
    def _as_images(X) -> list[np.ndarray]:
        if isinstance(X, np.ndarray) and X.ndim == 4:
            return [check_image(X[i]) for i in range(X.shape[0])]
        if isinstance(X, np.ndarray) and X.ndim == 3:
            raise ValueError("pass a batch: (N, H, W, C) array or list of (H, W, C) images")
        return [check_image(img) for img in X]

    def _resolve_labels(self, images, y) -> list[int]:
        if y is not None:
            labels = [int(v) for v in np.asarray(y).ravel()]
            if len(labels) != len(images):
                raise ValueError(f"got {len(labels)} labels for {len(images)} images")
            return labels
        if not self.models_:
            return [0] * len(images)
        return [top_k(self.models_[0].predict(img), 1)[0] for img in images]

    def _protect_one(self, img, label, seed) -> AttackResult:
        pert = PerturbationConfig(
            epsilon=self.epsilon,
            steps=self.steps,
            step_policy=self.step_policy,
            random_init=self.random_init,
            rng_seed=seed,
        )
        if self.method == "mm_pgd":
            mask = build_mask(img, self.mask_recipe_, ensemble=self.models_, label=label)
            return run_method(
                self.method, self.models_, img, label, pert, mask, self.mask_recipe_.strategy
            )
        return run_method(self.method, self.models_, img, label, pert)
