"""Attack engine: budget exactness, reduction chain, masking, determinism."""

import numpy as np
import pytest

from locshield.attacks import (
    METHODS,
    AttackResult,
    fgsm,
    m_pgd,
    mm_pgd,
    no_attack,
    pgd,
    random_noise,
    run_method,
    with_seed,
)
from locshield.image_ops import PerturbationConfig, clip_pixels, project_linf

from helpers import make_linear_model, random_image

EPS_SLACK = 1e-9


def _models(n, shape=(6, 6, 3), num_classes=3):
    return [make_linear_model(f"m{i}", shape, num_classes, rng_seed=i) for i in range(n)]


def _checkerboard(h, w):
    mask = np.indices((h, w)).sum(axis=0) % 2
    return mask.astype(np.float64)


def _invariants(result, original, epsilon):
    assert np.abs(result.perturbation).max() <= epsilon + EPS_SLACK
    assert result.adversarial.min() >= 0.0 and result.adversarial.max() <= 1.0
    assert np.array_equal(result.adversarial, clip_pixels(original + result.perturbation))


class TestBudgetInvariants:
    def test_every_method_respects_the_ball(self):
        rng = np.random.default_rng(0)
        models = _models(2)
        mask = _checkerboard(6, 6)
        for trial in range(20):
            img = random_image(rng, 6, 6)
            eps = float(rng.uniform(0.005, 0.2))
            cfg = PerturbationConfig(
                epsilon=eps,
                steps=int(rng.integers(1, 5)),
                random_init=bool(rng.integers(0, 2)),
                rng_seed=trial,
            )
            label = int(rng.integers(0, 3))
            for method in METHODS:
                result = run_method(
                    method,
                    models[:1] if method in ("fgsm", "pgd") else models,
                    img,
                    label,
                    cfg,
                    mask=mask if method == "mm_pgd" else None,
                )
                _invariants(result, img, eps)

    def test_saturated_pixels_stay_valid(self):
        # Extreme pixels sit on the [0, 1] boundary, so any unclipped update
        # would escape the valid range immediately.
        img = random_image(np.random.default_rng(1), 6, 6)
        img[:2] = 0.0
        img[-2:] = 1.0
        model = _models(1)[0]
        result = pgd(model, img, 0, PerturbationConfig(epsilon=0.1, steps=3))
        _invariants(result, img, 0.1)


class TestReductionChain:
    def test_fgsm_is_single_step_pgd_without_init(self):
        rng = np.random.default_rng(2)
        model = _models(1)[0]
        cfg = PerturbationConfig(epsilon=0.05, steps=1, random_init=False)
        for _ in range(5):
            img = random_image(rng, 6, 6)
            a = fgsm(model, img, 1, 0.05)
            b = pgd(model, img, 1, cfg)
            assert np.array_equal(a.adversarial, b.adversarial)
            assert np.array_equal(a.perturbation, b.perturbation)

    def test_pgd_is_single_model_m_pgd(self):
        rng = np.random.default_rng(3)
        model = _models(1)[0]
        cfg = PerturbationConfig(epsilon=0.03, steps=4, random_init=True, rng_seed=9)
        for _ in range(5):
            img = random_image(rng, 6, 6)
            a = pgd(model, img, 2, cfg)
            b = m_pgd([model], img, 2, cfg)
            assert np.array_equal(a.adversarial, b.adversarial)

    def test_m_pgd_is_all_ones_mm_pgd(self):
        rng = np.random.default_rng(4)
        models = _models(3)
        cfg = PerturbationConfig(epsilon=0.03, steps=4, random_init=True, rng_seed=11)
        ones = np.ones((6, 6))
        for _ in range(5):
            img = random_image(rng, 6, 6)
            a = m_pgd(models, img, 0, cfg)
            b = mm_pgd(models, img, 0, ones, cfg)
            assert np.array_equal(a.adversarial, b.adversarial)


class TestDeterminism:
    def test_same_seed_is_bitwise_stable(self):
        img = random_image(np.random.default_rng(5), 6, 6)
        models = _models(2)
        cfg = PerturbationConfig(epsilon=0.03, steps=3, random_init=True, rng_seed=7)
        a = m_pgd(models, img, 1, cfg)
        b = m_pgd(models, img, 1, cfg)
        assert np.array_equal(a.adversarial, b.adversarial)

    def test_seed_changes_the_random_init(self):
        img = random_image(np.random.default_rng(6), 6, 6)
        model = _models(1)[0]
        cfg = PerturbationConfig(epsilon=0.03, steps=1, random_init=True, rng_seed=0)
        a = pgd(model, img, 0, cfg)
        b = pgd(model, img, 0, with_seed(cfg, 1))
        assert not np.array_equal(a.adversarial, b.adversarial)

    def test_with_seed_only_touches_the_seed(self):
        cfg = PerturbationConfig(epsilon=0.05, steps=9, rng_seed=0)
        bumped = with_seed(cfg, 42)
        assert bumped.rng_seed == 42
        assert bumped.epsilon == cfg.epsilon and bumped.steps == cfg.steps
        assert cfg.rng_seed == 0

    def test_restarts_keep_the_highest_loss_chain(self):
        # Mirror of the multi-restart loop using only public pieces; the
        # result must be the chain whose final summed loss is largest.
        img = random_image(np.random.default_rng(7), 6, 6)
        model = _models(1)[0]
        cfg = PerturbationConfig(
            epsilon=0.08, steps=1, step_policy="conventional",
            random_init=True, restarts=3, rng_seed=5,
        )
        step = cfg.resolved_step_size()
        result = pgd(model, img, 1, cfg)
        finals = []
        for child in np.random.SeedSequence(cfg.rng_seed).spawn(cfg.restarts):
            rng = np.random.default_rng(child)
            x = project_linf(img + rng.uniform(-0.08, 0.08, size=img.shape), img, 0.08)
            for _ in range(cfg.steps):
                x = project_linf(x + step * np.sign(model.loss_gradient(x, 1)), img, 0.08)
            finals.append(x)
        losses = [model.loss(x, 1) for x in finals]
        assert len(set(losses)) == 3
        assert np.array_equal(result.adversarial, finals[int(np.argmax(losses))])


class TestMaskGating:
    def test_zero_mask_pixels_never_move(self):
        rng = np.random.default_rng(8)
        models = _models(2)
        mask = _checkerboard(6, 6)
        cfg = PerturbationConfig(epsilon=0.1, steps=4, random_init=True, rng_seed=3)
        for _ in range(5):
            img = random_image(rng, 6, 6)
            result = mm_pgd(models, img, 0, mask, cfg)
            off = mask == 0.0
            assert np.array_equal(result.adversarial[off], img[off])
            assert not result.perturbation[off].any()
            assert np.abs(result.perturbation[~off]).max() > 0

    def test_all_zero_mask_is_an_identity(self):
        img = random_image(np.random.default_rng(9), 6, 6)
        result = mm_pgd(_models(1), img, 0, np.zeros((6, 6)),
                        PerturbationConfig(epsilon=0.1, steps=2, random_init=True))
        assert np.array_equal(result.adversarial, img)

    def test_mask_shape_must_match_image(self):
        img = random_image(np.random.default_rng(10), 6, 6)
        with pytest.raises(Exception, match="does not match"):
            mm_pgd(_models(1), img, 0, np.zeros((4, 4)), PerturbationConfig(epsilon=0.1))


class TestBaselinesAndDispatch:
    def test_no_attack_is_exactly_identity(self):
        img = random_image(np.random.default_rng(11), 6, 6)
        result = no_attack(img)
        assert np.array_equal(result.adversarial, img)
        assert not result.perturbation.any()
        assert result.method == "no_attack"
        assert result.config is None

    def test_fgsm_zero_epsilon_is_identity(self):
        img = random_image(np.random.default_rng(12), 6, 6)
        result = fgsm(_models(1)[0], img, 0, 0.0)
        assert np.array_equal(result.adversarial, img)
        assert result.config is None

    def test_fgsm_rejects_negative_epsilon(self):
        img = random_image(np.random.default_rng(13), 6, 6)
        with pytest.raises(ValueError, match=">= 0"):
            fgsm(_models(1)[0], img, 0, -0.1)

    def test_random_noise_is_seeded_and_bounded(self):
        img = random_image(np.random.default_rng(14), 6, 6)
        a = random_noise(img, 0.05, rng_seed=1)
        b = random_noise(img, 0.05, rng_seed=1)
        c = random_noise(img, 0.05, rng_seed=2)
        assert np.array_equal(a.adversarial, b.adversarial)
        assert not np.array_equal(a.adversarial, c.adversarial)
        _invariants(a, img, 0.05)

    def test_random_noise_rejects_nonpositive_epsilon(self):
        img = random_image(np.random.default_rng(15), 6, 6)
        for eps in (0.0, -0.01):
            with pytest.raises(ValueError, match="positive"):
                random_noise(img, eps)

    def test_dispatch_rejects_unknown_method(self):
        img = random_image(np.random.default_rng(16), 6, 6)
        with pytest.raises(ValueError, match="method must be one of"):
            run_method("cw", _models(1), img, 0, PerturbationConfig())

    def test_single_model_methods_reject_ensembles(self):
        img = random_image(np.random.default_rng(17), 6, 6)
        for method in ("fgsm", "pgd"):
            with pytest.raises(ValueError, match="exactly one model"):
                run_method(method, _models(2), img, 0, PerturbationConfig())

    def test_mm_pgd_requires_a_mask(self):
        img = random_image(np.random.default_rng(18), 6, 6)
        with pytest.raises(ValueError, match="requires a mask"):
            run_method("mm_pgd", _models(2), img, 0, PerturbationConfig())

    def test_baselines_need_no_models(self):
        img = random_image(np.random.default_rng(19), 6, 6)
        cfg = PerturbationConfig(epsilon=0.02)
        assert run_method("no_attack", [], img, 0, cfg).method == "no_attack"
        assert run_method("random_noise", [], img, 0, cfg).method == "random_noise"

    def test_result_records_models_used(self):
        img = random_image(np.random.default_rng(20), 6, 6)
        models = _models(2)
        result = m_pgd(models, img, 0, PerturbationConfig(epsilon=0.02, steps=1))
        assert result.models_used == ["m0", "m1"]

    def test_result_rejects_unknown_method(self):
        with pytest.raises(ValueError, match="unknown method"):
            AttackResult(
                adversarial=np.zeros((2, 2, 3)),
                perturbation=np.zeros((2, 2, 3)),
                method="deepfool",
                config=None,
            )
