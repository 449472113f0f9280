"""Acceptance gate: ten checks, one test and one printed verdict line each.

The heavyweight fixture runs the frozen ten-campaign study grid over the
desk kit; set LOCSHIELD_TEST_CACHE to keep corpus, models, and campaign
artifacts between runs (campaigns resume per image, so reruns are cheap).
"""

import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from locshield import desk
from locshield.attacks import fgsm, m_pgd, mm_pgd, pgd, run_method, with_seed
from locshield.harness import derive_image_seed, run_campaign, sample_correct_subset
from locshield.image_ops import PerturbationConfig, clip_pixels
from locshield.masks import build_mask
from locshield.metrics import EvalRecord, protection_counts, ssim, top_k_counts

from helpers import random_image, tiny_torch_classifier
from oracles import (
    constant_pair_ssim,
    finite_difference_gradient,
    reference_protection_counts,
    reference_ssim,
    reference_top_k_counts,
)

GRADIENT_CAMPAIGNS = (
    "pgd_desk-a",
    "pgd_desk-b",
    "pgd_desk-c",
    "m_pgd",
    "mm_pgd_cam_union",
    "mm_pgd_cam_intersection",
    "mm_pgd_hv_nontexture",
    "mm_pgd_hv_texture",
)


def _passed(n: int, details: str) -> None:
    print(f"CRITERION {n}: PASS - {details}")


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr)


@pytest.fixture(scope="module")
def study_reports(desk_kit):
    """Reports of the frozen study grid, keyed by campaign name."""
    subset = sample_correct_subset(
        desk_kit.eval_manifest,
        desk_kit.all_models,
        desk.STUDY_SUBSET_SIZE,
        rng_seed=desk.STUDY_SUBSET_SEED,
        progress=_progress,
    )
    assert len(subset) == desk.STUDY_SUBSET_SIZE
    train_paths, heldout_path = desk.standard_descriptors(desk_kit.model_dir)
    loaded = dict(zip(train_paths, desk_kit.members))
    loaded[heldout_path] = desk_kit.heldout
    reports = {}
    for cfg in desk.study_campaigns(desk_kit.model_dir, desk_kit.root / "runs"):
        _progress(f"campaign {cfg.name}")
        reports[cfg.name] = run_campaign(cfg, subset, loaded_models=loaded, progress=_progress)
    return reports


def _heldout_pr(reports, name):
    return reports[name].summaries["desk-d"].protection_rate


def test_01_epsilon_ball_exactness(desk_kit):
    rng = np.random.default_rng(0)
    members = desk_kit.members
    masks = [
        (rng.uniform(size=(desk.IMAGE_SIZE, desk.IMAGE_SIZE)) < 0.5).astype(np.float64)
        for _ in range(8)
    ]
    methods = ("fgsm", "pgd", "m_pgd", "mm_pgd", "random_noise", "no_attack")
    start = time.monotonic()
    worst = 0.0
    for i in range(1000):
        method = methods[i % len(methods)]
        img = desk.render_scene(rng, int(rng.integers(0, desk.NUM_CLASSES)))
        eps = float(rng.uniform(0.005, 0.2))
        cfg = PerturbationConfig(
            epsilon=eps,
            steps=int(rng.integers(1, 4)),
            random_init=bool(rng.integers(0, 2)),
            rng_seed=i,
        )
        models = [members[i % 3]] if method in ("fgsm", "pgd") else members
        result = run_method(
            method, models, img, int(rng.integers(0, desk.NUM_CLASSES)), cfg,
            mask=masks[i % len(masks)] if method == "mm_pgd" else None,
        )
        overshoot = np.abs(result.perturbation).max()
        assert overshoot <= eps + 1e-9
        assert result.adversarial.min() >= 0.0 and result.adversarial.max() <= 1.0
        assert np.array_equal(result.adversarial, clip_pixels(img + result.perturbation))
        worst = max(worst, overshoot - eps)
    elapsed = time.monotonic() - start
    assert elapsed < 300.0
    _passed(1, f"1000 invocations, worst overshoot {worst:.3g} <= 1e-9, {elapsed:.1f}s")


def test_02_reduction_chain_is_bitwise(desk_kit, desk_images):
    model = desk_kit.members[0]
    members = desk_kit.members
    ones = np.ones((desk.IMAGE_SIZE, desk.IMAGE_SIZE))
    assert len(desk_images) >= 50
    for image_id, img, label in desk_images:
        seed = derive_image_seed(0, image_id)
        one_step = PerturbationConfig(epsilon=0.03, steps=1, random_init=False)
        a = fgsm(model, img, label, 0.03)
        b = pgd(model, img, label, one_step)
        assert np.array_equal(a.adversarial, b.adversarial)
        assert np.array_equal(a.perturbation, b.perturbation)

        cfg = PerturbationConfig(epsilon=0.03, steps=3, random_init=True, rng_seed=seed)
        c = pgd(model, img, label, cfg)
        d = m_pgd([model], img, label, cfg)
        assert np.array_equal(c.adversarial, d.adversarial)

        e = m_pgd(members, img, label, cfg)
        f = mm_pgd(members, img, label, ones, cfg)
        assert np.array_equal(e.adversarial, f.adversarial)
    _passed(2, f"fgsm=pgd(t=1), pgd=m_pgd(K=1), m_pgd=mm_pgd(mask=1) on {len(desk_images)} images")


def test_03_gradients_match_finite_differences():
    model = tiny_torch_classifier(rng_seed=0)
    n_params = sum(p.numel() for p in model.module.parameters())
    assert n_params <= 10_000
    rng = np.random.default_rng(1)
    img = random_image(rng, 16, 16)
    label = 2
    grad = model.loss_gradient(img, label)
    flat = rng.choice(16 * 16 * 3, size=500, replace=False)
    pixels = [tuple(int(v) for v in np.unravel_index(i, (16, 16, 3))) for i in flat]
    fd = finite_difference_gradient(model, img, label, pixels, h=1e-3)
    analytic = np.array([grad[p] for p in pixels])
    rel = np.abs(fd - analytic) / np.maximum(np.abs(analytic), 1e-12)
    share = float((rel < 1e-3).mean())
    assert share >= 0.95
    _passed(3, f"{n_params}-param CNN, {share:.1%} of 500 pixels within 1e-3 rel err")


def test_04_metric_counts_match_oracles():
    rng = np.random.default_rng(2)
    num_classes = 12
    identity_checked = 0
    for trial in range(1000):
        depth = int(rng.integers(5, 9))
        n = int(rng.integers(1, 31))
        force_clean_correct = trial % 4 == 0
        k = int(rng.integers(1, depth + 1))
        records = []
        for i in range(n):
            label = int(rng.integers(0, num_classes))
            clean = list(rng.permutation(num_classes)[:depth])
            adv = list(rng.permutation(num_classes)[:depth])
            if force_clean_correct and label not in clean[:k]:
                clean[int(rng.integers(0, k))] = label
            records.append(
                EvalRecord(
                    image_id=f"r{i}",
                    true_label=label,
                    clean_topk=tuple(int(c) for c in clean),
                    adv_topk=tuple(int(c) for c in adv),
                    ssim=None,
                    classifier="m",
                )
            )
        for which in ("adversarial", "clean"):
            assert top_k_counts(records, k, which) == reference_top_k_counts(records, k, which)
        assert protection_counts(records, k) == reference_protection_counts(records, k)
        if force_clean_correct:
            # Every record is clean-correct, so protection rate and top-k
            # accuracy are complements as exact rationals.
            protected, clean_correct = protection_counts(records, k)
            hits, total = top_k_counts(records, k)
            assert clean_correct == total == n
            assert Fraction(protected, clean_correct) == 1 - Fraction(hits, total)
            identity_checked += 1
    _passed(4, f"1000 record sets exact; PR = 1 - ACC identity on {identity_checked} clean-correct sets")


def test_05_ssim_against_reference():
    rng = np.random.default_rng(3)
    worst = 0.0
    for pair in range(100):
        h = int(rng.integers(11, 20))
        w = int(rng.integers(11, 20))
        x = random_image(rng, h, w)
        if pair % 2:
            y = clip_pixels(x + rng.normal(0.0, 0.02, size=x.shape))
        else:
            y = random_image(rng, h, w)
        gap = abs(ssim(x, y) - reference_ssim(x, y))
        worst = max(worst, gap)
        assert gap <= 1e-6
    for i in range(10):
        x = random_image(rng, 16, 16)
        assert ssim(x, x) == 1.0
    for c1, c2 in ((0.5, 0.5), (0.3, 0.35)):
        got = ssim(np.full((16, 16, 3), c1), np.full((16, 16, 3), c2))
        assert abs(got - constant_pair_ssim(c1, c2)) <= 1e-9
    _passed(5, f"100 pairs within 1e-6 of reference (worst {worst:.2e}); identity exact")


def test_06_mask_set_invariants(desk_kit, desk_images):
    recipes = desk.study_mask_recipes()
    members = desk_kit.members
    for _, img, label in desk_images[:20]:
        union = build_mask(img, recipes["cam_union"], ensemble=members, label=label)
        inter = build_mask(img, recipes["cam_intersection"], ensemble=members, label=label)
        assert np.all(inter <= union)
        assert inter.mean() <= union.mean()

        texture = build_mask(img, recipes["hv_texture"])
        smooth = build_mask(img, recipes["hv_nontexture"])
        assert np.array_equal(texture + smooth, np.ones_like(texture))

    flat = np.full((desk.IMAGE_SIZE, desk.IMAGE_SIZE, 3), 0.5)
    assert not build_mask(flat, recipes["hv_texture"]).any()
    _passed(6, "union >= intersection, texture/nontexture exact complements, flat image edge-free")


def test_07_transfer_orderings(study_reports):
    noise = _heldout_pr(study_reports, "random_noise")
    singles = {n: _heldout_pr(study_reports, n) for n in ("pgd_desk-a", "pgd_desk-b", "pgd_desk-c")}
    masked = {n: _heldout_pr(study_reports, n) for n in ("mm_pgd_cam_union", "mm_pgd_hv_nontexture")}

    best_single = max(singles.values())
    for name, pr in masked.items():
        assert pr > best_single, f"{name} held-out PR {pr:.3f} <= best single {best_single:.3f}"

    for name in GRADIENT_CAMPAIGNS:
        assert noise < _heldout_pr(study_reports, name), f"noise not below {name}"
    assert noise <= min(_heldout_pr(study_reports, n) for n in study_reports)

    for name in GRADIENT_CAMPAIGNS:
        report = study_reports[name]
        whitebox = min(report.summaries[c].protection_rate for c in report.train_classifiers)
        heldout = report.summaries["desk-d"].protection_rate
        assert whitebox > heldout, f"{name}: white-box {whitebox:.3f} <= held-out {heldout:.3f}"

    hours = sum(r.wall_clock_seconds for r in study_reports.values()) / 3600.0
    assert hours < 8.0
    _passed(
        7,
        f"masked held-out PR {masked['mm_pgd_cam_union']:.3f}/{masked['mm_pgd_hv_nontexture']:.3f}"
        f" > best single {best_single:.3f}; noise lowest; white-box > held-out; {hours:.2f}h",
    )


def test_08_mask_strategy_orderings(study_reports):
    def _pr(name, classifier):
        return study_reports[name].summaries[classifier].protection_rate

    gaps = []
    for classifier in study_reports["m_pgd"].train_classifiers:
        union = _pr("mm_pgd_cam_union", classifier)
        inter = _pr("mm_pgd_cam_intersection", classifier)
        entire = _pr("m_pgd", classifier)
        assert union >= inter, f"{classifier}: union {union:.3f} < intersection {inter:.3f}"
        assert entire >= union, f"{classifier}: entire {entire:.3f} < union {union:.3f}"
        gaps.append(entire - union)
        assert _pr("mm_pgd_hv_nontexture", classifier) >= _pr("mm_pgd_hv_texture", classifier)
    coverage = {
        name: study_reports[name].mask_coverage["mean"]
        for name in ("mm_pgd_cam_union", "mm_pgd_cam_intersection")
    }
    assert coverage["mm_pgd_cam_union"] >= coverage["mm_pgd_cam_intersection"]
    gap_str = "/".join(f"{g:+.3f}" for g in gaps)
    _passed(8, f"union >= intersection, entire >= union (gaps {gap_str}), nontexture >= texture")


def test_09_no_attack_is_exactly_clean(study_reports):
    report = study_reports["no_attack"]
    for name, summary in report.summaries.items():
        assert summary.protection_rate == 0.0, f"{name} PR {summary.protection_rate}"
        assert summary.mean_ssim == 1.0, f"{name} mean SSIM {summary.mean_ssim}"
    _passed(9, f"PR 0.0 and mean SSIM 1.0 on all {len(report.summaries)} classifiers")


def test_10_full_scale_procedure_is_documented():
    readme = Path(__file__).resolve().parents[1] / "README.md"
    assert readme.is_file()
    text = readme.read_text().lower()
    assert "full-scale evaluation" in text
    for needle in ("locshield evaluate", "locshield report"):
        assert needle in text, f"README does not mention {needle!r}"
    _passed(10, "README documents the optional full-scale evaluation procedure")
