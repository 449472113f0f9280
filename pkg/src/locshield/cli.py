"""Command-line front end.

Five subcommands: ``protect`` (batch-protect images), ``mask`` (build masks
only), ``evaluate`` (run a campaign from a config file), ``report``
(cross-campaign transferability table), ``calibrate-cam`` (coverage sweep
for picking a CAM threshold).

Conventions: the resolved configuration and all progress go to stderr;
stdout carries the results, as JSON lines when ``--json`` is set. Exit codes:
0 success, 1 partial failure (some images failed), 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .attacks import METHODS, run_method
from .backends.base import check_ensemble, top_k
from .backends.registry import load_backend
from .errors import UndefinedMetricError, UnsupportedCapabilityError
from .harness import (
    derive_image_seed,
    load_manifest,
    load_report,
    read_campaign_file,
    render_perturbation_preview,
    run_campaign,
    sample_correct_subset,
    save_manifest,
    transferability_table,
    write_transferability_csv,
)
from .image_ops import PerturbationConfig, load_image, save_image, save_mask
from .masks import STRATEGIES, MaskRecipe, build_entire_mask, build_mask, cam_coverage_sweep
from .metrics import ssim

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    _echo(f"config: {json.dumps(_resolved_config(args), sort_keys=True)}")
    try:
        return args.func(args)
    except (
        ValueError,
        KeyError,
        OSError,
        RuntimeError,
        UndefinedMetricError,
        UnsupportedCapabilityError,
        json.JSONDecodeError,
    ) as exc:
        _echo(f"error: {exc}")
        return 2


def _echo(msg: str) -> None:
    print(msg, file=sys.stderr)


def _resolved_config(args: argparse.Namespace) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="locshield",
        description="Protect images from location-revealing classifiers with bounded perturbations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    protect = sub.add_parser("protect", help="write protected copies of images")
    protect.add_argument("--input", required=True, help="image file or directory")
    protect.add_argument("--out", required=True, help="output directory")
    protect.add_argument(
        "--models", required=True, nargs="+", metavar="DESCRIPTOR",
        help="backend descriptor JSON paths (white-box ensemble)",
    )
    protect.add_argument("--method", default="mm_pgd", choices=METHODS)
    protect.add_argument(
        "--mask-strategy", default=None, choices=STRATEGIES,
        help="mm_pgd only; default cam_union",
    )
    protect.add_argument("--epsilon", type=float, default=0.03)
    protect.add_argument("--steps", type=int, default=20)
    protect.add_argument(
        "--step-policy", default="full-step", choices=("full-step", "conventional")
    )
    protect.add_argument("--no-random-init", action="store_true")
    protect.add_argument("--cam-threshold", type=float, default=0.4)
    protect.add_argument("--gain", type=float, default=100.0, help="delta preview amplification")
    protect.add_argument("--seed", type=int, default=0)
    protect.add_argument("--json", action="store_true")
    protect.set_defaults(func=_cmd_protect)

    mask = sub.add_parser("mask", help="build protection masks without attacking")
    mask.add_argument("--input", required=True, help="image file or directory")
    mask.add_argument("--out", required=True, help="output directory")
    mask.add_argument("--strategy", required=True, choices=STRATEGIES)
    mask.add_argument(
        "--models", nargs="+", default=[], metavar="DESCRIPTOR",
        help="required for CAM strategies",
    )
    mask.add_argument("--cam-threshold", type=float, default=0.4)
    mask.add_argument("--canny-low", type=float, default=0.1)
    mask.add_argument("--canny-high", type=float, default=0.2)
    mask.add_argument("--blur-sigma", type=float, default=1.4)
    mask.add_argument("--dilation-radius", type=int, default=2)
    mask.add_argument("--dilation-iterations", type=int, default=3)
    mask.add_argument("--json", action="store_true")
    mask.set_defaults(func=_cmd_mask)

    evaluate = sub.add_parser("evaluate", help="run a protection campaign from a config file")
    evaluate.add_argument("--config", required=True, help="campaign config JSON")
    evaluate.add_argument("--manifest", default=None, help="overrides the config's manifest")
    evaluate.add_argument(
        "--subset", type=int, default=None,
        help="first sample an all-models-correct subset of this size",
    )
    evaluate.add_argument("--subset-seed", type=int, default=0)
    evaluate.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    evaluate.add_argument("--json", action="store_true")
    evaluate.set_defaults(func=_cmd_evaluate)

    report = sub.add_parser("report", help="transferability table across campaign reports")
    report.add_argument("--reports", required=True, nargs="+", help="report.json paths")
    report.add_argument("--heldout", required=True, help="held-out classifier name")
    report.add_argument("--out", default=None, help="also write the table as CSV here")
    report.add_argument("--json", action="store_true")
    report.set_defaults(func=_cmd_report)

    calibrate = sub.add_parser(
        "calibrate-cam", help="coverage per CAM threshold for union and intersection"
    )
    calibrate.add_argument("--input", required=True, help="image file or directory")
    calibrate.add_argument(
        "--models", required=True, nargs="+", metavar="DESCRIPTOR",
        help="CAM-capable backend descriptors",
    )
    calibrate.add_argument(
        "--thresholds", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9",
        help="comma-separated sweep values",
    )
    calibrate.add_argument("--sample", type=int, default=25, help="images to sample")
    calibrate.add_argument("--seed", type=int, default=0)
    calibrate.add_argument("--json", action="store_true")
    calibrate.set_defaults(func=_cmd_calibrate_cam)

    return parser


def _collect_images(input_path: str) -> list[Path]:
    path = Path(input_path)
    if path.is_file():
        return [path]
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES)
        if not files:
            raise ValueError(f"no images ({'/'.join(_IMAGE_SUFFIXES)}) in {path}")
        return files
    raise FileNotFoundError(f"no such file or directory: {path}")


def _image_ids(files: list[Path]) -> list[str]:
    ids = [f.stem for f in files]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate image ids in input: {dupes}")
    return ids


def _predicted_label(models, img) -> int:
    return top_k(models[0].predict(img), 1)[0]


def _cmd_protect(args) -> int:
    models = check_ensemble([load_backend(p) for p in args.models])
    if args.method in ("fgsm", "pgd") and len(models) != 1:
        raise ValueError(f"{args.method} attacks exactly one model, got {len(models)}")
    if args.mask_strategy is not None and args.method != "mm_pgd":
        raise ValueError("--mask-strategy only applies to --method mm_pgd")
    recipe = None
    if args.method == "mm_pgd":
        recipe = MaskRecipe(
            strategy=args.mask_strategy or "cam_union", cam_threshold=args.cam_threshold
        )
    pert = PerturbationConfig(
        epsilon=args.epsilon,
        steps=args.steps,
        step_policy=args.step_policy,
        random_init=not args.no_random_init,
    )
    files = _collect_images(args.input)
    ids = _image_ids(files)
    out_root = Path(args.out)
    failures = []
    for path, image_id in zip(files, ids):
        try:
            img = load_image(path)
            label = _predicted_label(models, img)
            if recipe is not None:
                mask = build_mask(img, recipe, ensemble=models, label=label)
            else:
                mask = build_entire_mask(img)
            seeded = PerturbationConfig(
                epsilon=pert.epsilon,
                steps=pert.steps,
                step_policy=pert.step_policy,
                random_init=pert.random_init,
                rng_seed=derive_image_seed(args.seed, image_id),
            )
            result = run_method(
                args.method, models, img, label, seeded,
                mask=mask if args.method == "mm_pgd" else None,
                mask_id=None if recipe is None else recipe.strategy,
            )
            img_dir = out_root / image_id
            img_dir.mkdir(parents=True, exist_ok=True)
            save_image(result.adversarial, img_dir / "adv.png")
            save_mask(mask, img_dir / "mask.png")
            save_image(render_perturbation_preview(result, args.gain), img_dir / "delta_preview.png")
            score = ssim(img, result.adversarial)
            if args.json:
                print(json.dumps({
                    "image_id": image_id,
                    "label": label,
                    "ssim": score,
                    "mask_coverage": float(mask.mean()),
                    "adv": str(img_dir / "adv.png"),
                }))
            else:
                print(f"{image_id} ssim={score:.6f}")
        except (ValueError, OSError, RuntimeError) as exc:
            failures.append((str(path), str(exc)))
            _echo(f"FAILED {path}: {exc}")
    _echo(f"protected {len(files) - len(failures)}/{len(files)} images")
    if failures:
        for path, reason in failures:
            _echo(f"failed: {path}: {reason}")
        return 1
    return 0


def _cmd_mask(args) -> int:
    recipe = MaskRecipe(
        strategy=args.strategy,
        cam_threshold=args.cam_threshold,
        canny_low=args.canny_low,
        canny_high=args.canny_high,
        blur_sigma=args.blur_sigma,
        dilation_radius=args.dilation_radius,
        dilation_iterations=args.dilation_iterations,
    )
    needs_models = args.strategy in ("cam_union", "cam_intersection")
    if needs_models and not args.models:
        raise ValueError(f"strategy {args.strategy!r} requires --models")
    models = check_ensemble([load_backend(p) for p in args.models]) if needs_models else None
    files = _collect_images(args.input)
    ids = _image_ids(files)
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    failures = []
    for path, image_id in zip(files, ids):
        try:
            img = load_image(path)
            label = _predicted_label(models, img) if needs_models else None
            mask = build_mask(img, recipe, ensemble=models, label=label)
            mask_path = out_root / f"{image_id}.mask.png"
            save_mask(mask, mask_path)
            if args.json:
                print(json.dumps({
                    "image_id": image_id,
                    "strategy": args.strategy,
                    "coverage": float(mask.mean()),
                    "mask": str(mask_path),
                }))
            else:
                print(f"{image_id} coverage={mask.mean():.4f}")
        except (ValueError, OSError, RuntimeError) as exc:
            failures.append((str(path), str(exc)))
            _echo(f"FAILED {path}: {exc}")
    if failures:
        return 1
    return 0


def _cmd_evaluate(args) -> int:
    cfg, manifest_path = read_campaign_file(args.config)
    if args.manifest is not None:
        manifest_path = args.manifest
    if manifest_path is None:
        raise ValueError("no manifest: pass --manifest or set \"manifest\" in the config")
    manifest = load_manifest(manifest_path)
    if args.subset is not None:
        handles = [load_backend(p) for p in cfg.train_models + cfg.heldout_models]
        manifest = sample_correct_subset(
            manifest, handles, args.subset, rng_seed=args.subset_seed, progress=_echo
        )
        subset_path = Path(cfg.out_dir) / "subset.csv"
        save_manifest(manifest, subset_path)
        _echo(f"subset of {len(manifest)} images written to {subset_path}")
    report = run_campaign(cfg, manifest, workers=args.workers, progress=_echo)
    if args.json:
        by_image: dict[str, dict] = {}
        for rec in report.records:
            row = by_image.setdefault(
                rec.image_id, {"image_id": rec.image_id, "ssim": rec.ssim, "classifiers": {}}
            )
            row["classifiers"][rec.classifier] = {
                "clean_top1": rec.clean_topk[0],
                "adv_top1": rec.adv_topk[0],
            }
        for image_id in sorted(by_image):
            print(json.dumps(by_image[image_id], sort_keys=True))
    else:
        for name in report.classifiers:
            s = report.summaries[name]
            print(
                f"{report.method} {name} k={s.k} acc={s.accuracy:.4f} "
                f"pr={s.protection_rate:.4f} ssim={_fmt_ssim(s.mean_ssim)} n={s.n_images}"
            )
    _echo(
        f"campaign {report.name}: {report.n_images - report.n_failures}/{report.n_images} images, "
        f"report in {cfg.out_dir}"
    )
    return 1 if report.n_failures else 0


def _fmt_ssim(value) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def _cmd_report(args) -> int:
    reports = [load_report(p) for p in args.reports]
    rows = transferability_table(reports, args.heldout)
    if args.out is not None:
        write_transferability_csv(rows, args.out)
        _echo(f"wrote {args.out}")
    for name, pr, mean_ssim in rows:
        if args.json:
            print(json.dumps({"method": name, "pr_k": pr, "mean_ssim": mean_ssim}))
        else:
            print(f"{name} pr={pr:.4f} ssim={_fmt_ssim(mean_ssim)}")
    return 0


def _cmd_calibrate_cam(args) -> int:
    models = check_ensemble([load_backend(p) for p in args.models])
    thresholds = [float(v) for v in args.thresholds.split(",") if v.strip() != ""]
    if not thresholds or not all(0.0 < t < 1.0 for t in thresholds):
        raise ValueError(f"thresholds must lie in (0, 1), got {args.thresholds!r}")
    files = _collect_images(args.input)
    if args.sample < len(files):
        import numpy as np

        keep = np.random.default_rng(args.seed).choice(len(files), args.sample, replace=False)
        files = [files[i] for i in sorted(keep)]
    images = [load_image(p) for p in files]
    labels = [_predicted_label(models, img) for img in images]
    _echo(f"sweeping {len(thresholds)} thresholds over {len(images)} images")
    rows = cam_coverage_sweep(models, images, labels, thresholds)
    for threshold, union_cov, inter_cov in rows:
        if args.json:
            print(json.dumps({
                "threshold": threshold,
                "union_coverage": union_cov,
                "intersection_coverage": inter_cov,
            }))
        else:
            print(f"threshold={threshold:.3f} union={union_cov:.4f} intersection={inter_cov:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
