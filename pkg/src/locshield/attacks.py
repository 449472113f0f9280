"""L-infinity perturbation generators: FGSM, PGD, M-PGD, MM-PGD, noise baseline.

All methods share one iteration core, so the reduction chain
``fgsm == pgd(t=1, no init) == m_pgd(K=1) == mm_pgd(mask=1)`` holds bitwise
under a shared seed. Arithmetic is float64 throughout; gradients are summed
across ensemble members before the sign is taken, and sign(0) = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .backends.base import ClassifierHandle, check_ensemble
from .image_ops import PerturbationConfig, apply_masked_step, clip_pixels, project_linf
from .validation import check_image, check_label, check_mask

METHODS = ("fgsm", "pgd", "m_pgd", "mm_pgd", "random_noise", "no_attack")


@dataclass
class AttackResult:
    """A protected image plus the perturbation that produced it.

    Invariants: ``adversarial == clip_pixels(original + perturbation)`` exactly,
    and ``|perturbation|`` never exceeds the configured epsilon (plus float
    rounding below 1e-9).
    """

    adversarial: np.ndarray
    perturbation: np.ndarray
    method: str
    config: PerturbationConfig | None
    mask_id: str | None = None
    models_used: list[str] | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.models_used is None:
            self.models_used = []


def _finalize(
    method: str,
    original: np.ndarray,
    final: np.ndarray,
    config: PerturbationConfig | None,
    mask_id: str | None = None,
    models_used=(),
) -> AttackResult:
    # Recompute adversarial from the stored perturbation so the
    # clip(original + perturbation) reconstruction is exact by construction.
    perturbation = final - original
    adversarial = clip_pixels(original + perturbation)
    return AttackResult(
        adversarial=adversarial,
        perturbation=perturbation,
        method=method,
        config=config,
        mask_id=mask_id,
        models_used=list(models_used),
    )


def _summed_gradient(models, img: np.ndarray, label: int) -> np.ndarray:
    grad = models[0].loss_gradient(img, label)
    for m in models[1:]:
        grad = grad + m.loss_gradient(img, label)
    return grad


def _iterate(
    models,
    img: np.ndarray,
    label: int,
    cfg: PerturbationConfig,
    mask: np.ndarray | None,
    method: str,
    mask_id: str | None = None,
) -> AttackResult:
    img = check_image(img)
    models = check_ensemble(models)
    label = check_label(label, models[0].num_classes)
    if mask is not None:
        mask = check_mask(mask, shape=img.shape[:2])
    eps = float(cfg.epsilon)
    step = cfg.resolved_step_size()

    children = np.random.SeedSequence(cfg.rng_seed).spawn(cfg.restarts)
    best: np.ndarray | None = None
    best_loss = -np.inf
    for child in children:
        rng = np.random.default_rng(child)
        if cfg.random_init:
            init = rng.uniform(-eps, eps, size=img.shape)
            if mask is not None:
                init = mask[:, :, None] * init
            x_adv = project_linf(img + init, img, eps)
        else:
            x_adv = img.copy()
        for _ in range(cfg.steps):
            grad_sign = np.sign(_summed_gradient(models, x_adv, label))
            if mask is not None:
                candidate = apply_masked_step(x_adv, grad_sign, mask, step)
            else:
                candidate = x_adv + step * grad_sign
            x_adv = project_linf(candidate, img, eps)
        if cfg.restarts == 1:
            best = x_adv
            break
        final_loss = sum(m.loss(x_adv, label) for m in models)
        if final_loss > best_loss:
            best, best_loss = x_adv, final_loss
    names = [m.name for m in models]
    return _finalize(method, img, best, cfg, mask_id=mask_id, models_used=names)


def fgsm(model: ClassifierHandle, img: np.ndarray, label: int, epsilon: float) -> AttackResult:
    """Single sign-of-gradient step of size epsilon (epsilon = 0 is a no-op)."""
    img = check_image(img)
    label = check_label(label, model.num_classes)
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    if epsilon == 0:
        return _finalize("fgsm", img, img.copy(), None, models_used=[model.name])
    grad_sign = np.sign(model.loss_gradient(img, label))
    stepped = clip_pixels(img + epsilon * grad_sign)
    cfg = PerturbationConfig(epsilon=epsilon, steps=1, random_init=False)
    return _finalize("fgsm", img, stepped, cfg, models_used=[model.name])


def pgd(model: ClassifierHandle, img: np.ndarray, label: int, cfg: PerturbationConfig) -> AttackResult:
    """Iterated sign steps projected back into the epsilon ball around ``img``."""
    return _iterate([model], img, label, cfg, mask=None, method="pgd")


def m_pgd(ensemble, img: np.ndarray, label: int, cfg: PerturbationConfig) -> AttackResult:
    """PGD on the summed cross-entropy of every ensemble member."""
    return _iterate(ensemble, img, label, cfg, mask=None, method="m_pgd")


def mm_pgd(
    ensemble,
    img: np.ndarray,
    label: int,
    mask: np.ndarray,
    cfg: PerturbationConfig,
    mask_id: str | None = None,
) -> AttackResult:
    """M-PGD with every update (and random init) gated by an attention mask.

    Pixels where the mask is zero never deviate from the original image.
    """
    return _iterate(ensemble, img, label, cfg, mask=mask, method="mm_pgd", mask_id=mask_id)


def random_noise(img: np.ndarray, epsilon: float, rng_seed: int = 0) -> AttackResult:
    """Uniform(-epsilon, epsilon) noise baseline, clipped to valid pixels."""
    img = check_image(img)
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    rng = np.random.default_rng(np.random.SeedSequence(rng_seed))
    noisy = clip_pixels(img + rng.uniform(-epsilon, epsilon, size=img.shape))
    cfg = PerturbationConfig(epsilon=epsilon, steps=1, random_init=True, rng_seed=rng_seed)
    return _finalize("random_noise", img, noisy, cfg)


def no_attack(img: np.ndarray) -> AttackResult:
    """Identity method: zero perturbation, used as the evaluation baseline."""
    img = check_image(img)
    return _finalize("no_attack", img, img.copy(), None)


def with_seed(cfg: PerturbationConfig, rng_seed: int) -> PerturbationConfig:
    """Copy of ``cfg`` with a different seed (per-image derivation helper)."""
    return replace(cfg, rng_seed=rng_seed)


def run_method(
    method: str,
    models,
    img: np.ndarray,
    label: int,
    cfg: PerturbationConfig,
    mask: np.ndarray | None = None,
    mask_id: str | None = None,
) -> AttackResult:
    """Dispatch one attack by name; the single entry point for batch callers.

    Model and mask requirements vary: fgsm and pgd take exactly one model,
    mm_pgd additionally needs a mask, the two baselines use neither.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    if method == "no_attack":
        return no_attack(img)
    if method == "random_noise":
        return random_noise(img, cfg.epsilon, rng_seed=cfg.rng_seed)
    ensemble = check_ensemble(models)
    if method in ("fgsm", "pgd") and len(ensemble) != 1:
        raise ValueError(f"{method} attacks exactly one model, got {len(ensemble)}")
    if method == "fgsm":
        return fgsm(ensemble[0], img, label, cfg.epsilon)
    if method == "pgd":
        return pgd(ensemble[0], img, label, cfg)
    if method == "m_pgd":
        return m_pgd(ensemble, img, label, cfg)
    if mask is None:
        raise ValueError("mm_pgd requires a mask")
    return mm_pgd(ensemble, img, label, mask, cfg, mask_id=mask_id)
