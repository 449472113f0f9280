"""Campaign orchestration: subset sampling, batch protection, reports.

A campaign runs one attack method over a manifest of images, saves per-image
artifacts under ``<out_dir>/<image_id>/``, scores every listed classifier on
clean and protected images, and aggregates per-classifier metrics. Campaigns
are resumable: a completed image is recognized by its ``record.json`` carrying
the same config hash, so reruns skip finished work.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import re
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .attacks import METHODS, AttackResult, run_method, with_seed
from .backends.base import check_ensemble, top_k
from .backends.registry import load_backend
from .image_ops import PerturbationConfig, clip_pixels, load_image, save_image, save_mask
from .masks import MaskRecipe, build_entire_mask, build_mask
from .metrics import EvalRecord, MetricSummary, ssim, summarize
from .validation import check_image

_SAFE_NAME = re.compile(r"[A-Za-z0-9][A-Za-z0-9._-]*")

# How many ranked classes each record keeps; deep enough to rescore at a
# larger k than the campaign's own without rerunning the attack.
_RANK_DEPTH_FLOOR = 10


# ---------------------------------------------------------------------------
# Dataset manifest
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    path: str
    label: int


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered set of labeled images; ids double as artifact directory names."""

    entries: tuple[ManifestEntry, ...]
    class_names: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if self.class_names is not None:
            object.__setattr__(self, "class_names", tuple(self.class_names))
        seen = set()
        for e in self.entries:
            if not _SAFE_NAME.fullmatch(e.image_id):
                raise ValueError(f"image_id {e.image_id!r} is not filesystem-safe")
            if e.image_id in seen:
                raise ValueError(f"duplicate image_id {e.image_id!r}")
            seen.add(e.image_id)
            if e.label < 0:
                raise ValueError(f"{e.image_id}: label must be >= 0, got {e.label}")
            if self.class_names is not None and e.label >= len(self.class_names):
                raise ValueError(
                    f"{e.image_id}: label {e.label} outside vocabulary of {len(self.class_names)}"
                )

    def __len__(self) -> int:
        return len(self.entries)

    def max_label(self) -> int:
        return max(e.label for e in self.entries)


def load_manifest(path, class_names=None) -> DatasetManifest:
    """Read a ``image_id,path,label`` CSV; relative paths resolve next to it."""
    path = Path(path)
    base = path.parent
    entries = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["image_id", "path", "label"]:
            raise ValueError(f"{path}: expected header image_id,path,label, got {header}")
        for row in reader:
            if len(row) != 3:
                raise ValueError(f"{path}: malformed row {row}")
            image_id, rel, label = row
            resolved = Path(os.path.expandvars(rel))
            if not resolved.is_absolute():
                resolved = base / resolved
            if not resolved.is_file():
                raise FileNotFoundError(f"{path}: {image_id}: no such image {resolved}")
            entries.append(ManifestEntry(image_id, str(resolved), int(label)))
    if not entries:
        raise ValueError(f"{path}: manifest is empty")
    return DatasetManifest(tuple(entries), class_names)


def save_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "path", "label"])
        for e in manifest.entries:
            writer.writerow([e.image_id, e.path, e.label])


# ---------------------------------------------------------------------------
# Campaign configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CampaignConfig:
    """Everything that determines a campaign's outputs (hashable for resume).

    ``train_models`` and ``heldout_models`` are backend descriptor paths, or
    bare names resolved through the ``loaded_models`` argument of
    ``run_campaign``; the held-out side is scored but never attacked.
    """

    name: str
    method: str
    out_dir: str
    train_models: tuple[str, ...]
    heldout_models: tuple[str, ...] = ()
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    mask_recipe: MaskRecipe | None = None
    k: int = 5
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "train_models", tuple(self.train_models))
        object.__setattr__(self, "heldout_models", tuple(self.heldout_models))
        if not _SAFE_NAME.fullmatch(self.name):
            raise ValueError(f"campaign name {self.name!r} is not filesystem-safe")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.method == "mm_pgd" and self.mask_recipe is None:
            raise ValueError("mm_pgd requires a mask_recipe")
        if self.method != "mm_pgd" and self.mask_recipe is not None:
            raise ValueError(f"mask_recipe only applies to mm_pgd, not {self.method!r}")
        if self.method in ("fgsm", "pgd") and len(self.train_models) != 1:
            raise ValueError(f"{self.method} attacks exactly one model")
        if self.method in ("m_pgd", "mm_pgd") and not self.train_models:
            raise ValueError(f"{self.method} requires at least one training model")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")

    def canonical(self) -> dict:
        """Stable dict of every output-determining field (out_dir excluded)."""
        return {
            "name": self.name,
            "method": self.method,
            "train_models": list(self.train_models),
            "heldout_models": list(self.heldout_models),
            "perturbation": asdict(self.perturbation),
            "mask_recipe": None if self.mask_recipe is None else asdict(self.mask_recipe),
            "k": self.k,
            "rng_seed": self.rng_seed,
        }


def campaign_config_hash(cfg: CampaignConfig) -> str:
    payload = json.dumps(cfg.canonical(), sort_keys=True).encode()
    return hashlib.blake2b(payload, digest_size=16).hexdigest()


_CAMPAIGN_KEYS = {
    "name",
    "method",
    "out_dir",
    "train_models",
    "heldout_models",
    "perturbation",
    "mask_recipe",
    "k",
    "rng_seed",
    "manifest",
}


def read_campaign_file(path) -> tuple[CampaignConfig, str | None]:
    """Parse a campaign JSON file; returns the config and the manifest path.

    Model paths, out_dir, and manifest get environment-variable expansion and
    resolve relative to the file. Unknown keys are rejected.
    """
    path = Path(path)
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: campaign config must be a JSON object")
    unknown = sorted(set(data) - _CAMPAIGN_KEYS)
    if unknown:
        raise ValueError(f"{path}: unknown campaign config keys {unknown}")
    missing = [key for key in ("name", "method", "out_dir", "train_models") if key not in data]
    if missing:
        raise ValueError(f"{path}: missing campaign config keys {missing}")

    base = path.parent

    def _resolve(p: str) -> str:
        expanded = Path(os.path.expandvars(p))
        return str(expanded if expanded.is_absolute() else base / expanded)

    pert = PerturbationConfig(**data.get("perturbation", {}))
    recipe = data.get("mask_recipe")
    cfg = CampaignConfig(
        name=data["name"],
        method=data["method"],
        out_dir=_resolve(data["out_dir"]),
        train_models=tuple(_resolve(p) for p in data["train_models"]),
        heldout_models=tuple(_resolve(p) for p in data.get("heldout_models", [])),
        perturbation=pert,
        mask_recipe=None if recipe is None else MaskRecipe(**recipe),
        k=int(data.get("k", 5)),
        rng_seed=int(data.get("rng_seed", 0)),
    )
    manifest = data.get("manifest")
    return cfg, None if manifest is None else _resolve(manifest)


# ---------------------------------------------------------------------------
# Subset sampling
# ---------------------------------------------------------------------------


def sample_correct_subset(
    manifest: DatasetManifest,
    classifiers,
    n: int,
    rng_seed: int = 0,
    progress=None,
) -> DatasetManifest:
    """Seeded random subset on which every classifier's top-1 is correct.

    Scans a shuffled order and stops as soon as ``n`` qualifying images are
    found; if fewer qualify, returns them all with a warning.
    """
    classifiers = list(classifiers)
    if not classifiers:
        raise ValueError("need at least one classifier to filter by")
    if not 1 <= n <= len(manifest):
        raise ValueError(f"n must be in 1..{len(manifest)}, got {n}")
    order = np.random.default_rng(rng_seed).permutation(len(manifest))
    chosen = []
    for scanned, idx in enumerate(order, start=1):
        entry = manifest.entries[idx]
        img = load_image(entry.path)
        if all(top_k(h.predict(img), 1)[0] == entry.label for h in classifiers):
            chosen.append(entry)
        if progress is not None and scanned % 200 == 0:
            progress(f"scanned {scanned}/{len(manifest)} images, kept {len(chosen)}")
        if len(chosen) == n:
            break
    if not chosen:
        raise RuntimeError("no image is classified correctly by every classifier")
    if len(chosen) < n:
        warnings.warn(
            f"only {len(chosen)} of the requested {n} images qualify", stacklevel=2
        )
    return DatasetManifest(tuple(chosen), manifest.class_names)


# ---------------------------------------------------------------------------
# Campaign execution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CampaignReport:
    name: str
    method: str
    k: int
    config_hash: str
    train_classifiers: tuple[str, ...]
    heldout_classifiers: tuple[str, ...]
    summaries: dict
    records: tuple[EvalRecord, ...]
    mask_coverage: dict
    n_images: int
    n_failures: int
    failed_images: tuple[str, ...]
    wall_clock_seconds: float
    config: dict

    @property
    def classifiers(self) -> tuple[str, ...]:
        return self.train_classifiers + self.heldout_classifiers

    def to_dict(self) -> dict:
        data = asdict(self)
        data["summaries"] = {name: asdict(s) for name, s in self.summaries.items()}
        data["records"] = [r.to_dict() for r in self.records]
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "CampaignReport":
        return cls(
            name=data["name"],
            method=data["method"],
            k=int(data["k"]),
            config_hash=data["config_hash"],
            train_classifiers=tuple(data["train_classifiers"]),
            heldout_classifiers=tuple(data["heldout_classifiers"]),
            summaries={
                name: MetricSummary(**s) for name, s in data["summaries"].items()
            },
            records=tuple(EvalRecord.from_dict(r) for r in data["records"]),
            mask_coverage=dict(data["mask_coverage"]),
            n_images=int(data["n_images"]),
            n_failures=int(data["n_failures"]),
            failed_images=tuple(data["failed_images"]),
            wall_clock_seconds=float(data["wall_clock_seconds"]),
            config=dict(data["config"]),
        )


def save_report(report: CampaignReport, path) -> None:
    _write_atomic(Path(path), json.dumps(report.to_dict(), indent=2, sort_keys=True))


def load_report(path) -> CampaignReport:
    with open(path) as fh:
        return CampaignReport.from_dict(json.load(fh))


def derive_image_seed(rng_seed: int, image_id: str) -> int:
    """Stable per-image seed; independent of processing order, so resumed and
    parallel runs perturb each image identically."""
    digest = hashlib.blake2b(f"{rng_seed}:{image_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def render_perturbation_preview(result: AttackResult, gain: float = 100.0) -> np.ndarray:
    """Mid-gray anchored, amplified view of the perturbation."""
    if gain <= 0:
        raise ValueError(f"gain must be positive, got {gain}")
    return clip_pixels(0.5 + gain * result.perturbation)


def _load_campaign_models(cfg: CampaignConfig, loaded_models):
    loaded_models = loaded_models or {}

    def _get(ref: str):
        if ref in loaded_models:
            return loaded_models[ref]
        return load_backend(ref)

    train = [_get(ref) for ref in cfg.train_models]
    heldout = [_get(ref) for ref in cfg.heldout_models]
    names = [h.name for h in train + heldout]
    if len(set(names)) != len(names):
        raise ValueError(f"classifier names must be unique, got {names}")
    if set(h.name for h in train) & set(h.name for h in heldout):
        raise ValueError("held-out classifiers must be disjoint from the training ensemble")
    if cfg.method not in ("random_noise", "no_attack"):
        check_ensemble(train)
    return train, heldout


def _run_attack(cfg: CampaignConfig, train, img, label, mask, seed) -> AttackResult:
    pert = with_seed(cfg.perturbation, seed)
    if cfg.method == "mm_pgd":
        return run_method(cfg.method, train, img, label, pert, mask, cfg.mask_recipe.strategy)
    return run_method(cfg.method, train, img, label, pert)


def _rank_depth(cfg: CampaignConfig, num_classes: int) -> int:
    return min(num_classes, max(cfg.k, _RANK_DEPTH_FLOOR))


def _process_image(cfg, chash, entry, train, heldout, out_dir: Path):
    """Attack one image, write its artifacts, and score every classifier.

    Returns (records, mask_coverage, resumed). ``record.json`` is written
    last and atomically, so its presence marks the image as complete.
    """
    img_dir = out_dir / entry.image_id
    rec_path = img_dir / "record.json"
    if rec_path.is_file():
        with open(rec_path) as fh:
            cached = json.load(fh)
        if cached.get("config_hash") == chash:
            records = [EvalRecord.from_dict(r) for r in cached["records"]]
            return records, float(cached["mask_coverage"]), True

    img = check_image(load_image(entry.path))
    seed = derive_image_seed(cfg.rng_seed, entry.image_id)
    if cfg.method == "mm_pgd":
        mask = build_mask(img, cfg.mask_recipe, ensemble=train, label=entry.label)
    else:
        mask = build_entire_mask(img)
    result = _run_attack(cfg, train, img, entry.label, mask, seed)

    img_dir.mkdir(parents=True, exist_ok=True)
    save_image(result.adversarial, img_dir / "adv.png")
    save_mask(mask, img_dir / "mask.png")
    save_image(render_perturbation_preview(result), img_dir / "delta_preview.png")

    ssim_val = ssim(img, result.adversarial)
    records = []
    for handle in list(train) + list(heldout):
        depth = _rank_depth(cfg, handle.num_classes)
        records.append(
            EvalRecord(
                image_id=entry.image_id,
                true_label=entry.label,
                clean_topk=tuple(top_k(handle.predict(img), depth)),
                adv_topk=tuple(top_k(handle.predict(result.adversarial), depth)),
                ssim=ssim_val,
                classifier=handle.name,
            )
        )
    coverage = float(mask.mean())
    payload = {
        "image_id": entry.image_id,
        "config_hash": chash,
        "seed": seed,
        "method": result.method,
        "mask_coverage": coverage,
        "records": [r.to_dict() for r in records],
    }
    _write_atomic(rec_path, json.dumps(payload, indent=2, sort_keys=True))
    return records, coverage, False


def run_campaign(
    cfg: CampaignConfig,
    manifest: DatasetManifest,
    loaded_models=None,
    workers: int = 1,
    progress=None,
) -> CampaignReport:
    """Run (or resume) a campaign and write report.json + summary.csv.

    ``loaded_models`` maps config model references to in-memory handles,
    bypassing descriptor loading. Worker threads share the handles, so the
    pool is capped to 1 unless every handle declares itself thread safe.
    """
    start = time.monotonic()
    train, heldout = _load_campaign_models(cfg, loaded_models)
    every = train + heldout
    ceiling = min(h.num_classes for h in every)
    if manifest.max_label() >= ceiling:
        raise ValueError(
            f"manifest labels reach {manifest.max_label()} but a classifier has only {ceiling} classes"
        )

    chash = campaign_config_hash(cfg)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lock_path = out_dir / "campaign.json"
    if lock_path.is_file():
        with open(lock_path) as fh:
            existing = json.load(fh)
        if existing.get("config_hash") != chash:
            raise ValueError(
                f"{out_dir} holds artifacts for a different campaign config; use a fresh out_dir"
            )
    else:
        _write_atomic(lock_path, json.dumps({"config_hash": chash, "config": cfg.canonical()}, indent=2))

    if workers > 1 and not all(h.thread_safe for h in every):
        if progress is not None:
            progress("a classifier is not thread safe; running single-threaded")
        workers = 1

    def _work(entry):
        return _process_image(cfg, chash, entry, train, heldout, out_dir)

    outcomes = []
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [(e, pool.submit(_work, e)) for e in manifest.entries]
            for entry, fut in futures:
                try:
                    outcomes.append((entry, fut.result(), None))
                except Exception as exc:
                    outcomes.append((entry, None, exc))
    else:
        for entry in manifest.entries:
            try:
                outcomes.append((entry, _work(entry), None))
            except Exception as exc:
                outcomes.append((entry, None, exc))

    records: list[EvalRecord] = []
    coverages: list[float] = []
    failed: list[str] = []
    for done, (entry, outcome, exc) in enumerate(outcomes, start=1):
        if exc is not None:
            failed.append(entry.image_id)
            if progress is not None:
                progress(f"FAILED {entry.image_id}: {exc}")
            continue
        image_records, coverage, resumed = outcome
        records.extend(image_records)
        coverages.append(coverage)
        if progress is not None and (done % 25 == 0 or done == len(outcomes)):
            progress(f"processed {done}/{len(outcomes)} images")

    _check_completeness(records, manifest, failed, every)
    summaries = {
        h.name: summarize([r for r in records if r.classifier == h.name], cfg.k)
        for h in every
    }
    coverage_stats = {
        "mean": float(np.mean(coverages)) if coverages else None,
        "min": float(np.min(coverages)) if coverages else None,
        "max": float(np.max(coverages)) if coverages else None,
    }
    report = CampaignReport(
        name=cfg.name,
        method=cfg.method,
        k=cfg.k,
        config_hash=chash,
        train_classifiers=tuple(h.name for h in train),
        heldout_classifiers=tuple(h.name for h in heldout),
        summaries=summaries,
        records=tuple(records),
        mask_coverage=coverage_stats,
        n_images=len(manifest),
        n_failures=len(failed),
        failed_images=tuple(failed),
        wall_clock_seconds=time.monotonic() - start,
        config=cfg.canonical(),
    )
    save_report(report, out_dir / "report.json")
    _write_summary_csv(report, out_dir / "summary.csv")
    return report


def _check_completeness(records, manifest, failed, handles) -> None:
    expected = (len(manifest) - len(failed)) * len(handles)
    pairs = {(r.image_id, r.classifier) for r in records}
    if len(records) != expected or len(pairs) != expected:
        raise RuntimeError(
            f"report is incomplete: {len(records)} records for {expected} expected pairs"
        )


def _write_summary_csv(report: CampaignReport, path: Path) -> None:
    rows = [["method", "classifier", "k", "acc_k", "pr_k", "mean_ssim", "n"]]
    for name in report.classifiers:
        s = report.summaries[name]
        rows.append(
            [
                report.method,
                name,
                s.k,
                _fmt(s.accuracy),
                _fmt(s.protection_rate),
                _fmt(s.mean_ssim),
                s.n_images,
            ]
        )
    _write_csv_atomic(path, rows)


# ---------------------------------------------------------------------------
# Cross-campaign transferability table
# ---------------------------------------------------------------------------


def transferability_table(reports, heldout: str) -> list[tuple[str, float, float]]:
    """(campaign name, protection rate, mean SSIM) against one held-out
    classifier, one row per campaign, sorted by name.

    The campaign name is the row key so that the same attack method with
    different masks yields distinct rows.
    """
    rows = []
    seen = set()
    for report in reports:
        if heldout not in report.summaries:
            raise ValueError(f"campaign {report.name!r} has no classifier {heldout!r}")
        if report.name in seen:
            raise ValueError(f"duplicate campaign name {report.name!r}")
        seen.add(report.name)
        s = report.summaries[heldout]
        rows.append((report.name, s.protection_rate, s.mean_ssim))
    return sorted(rows)


def write_transferability_csv(rows, path) -> None:
    table = [["method", "pr_k", "mean_ssim"]]
    for name, pr, mean_ssim in rows:
        table.append([name, _fmt(pr), _fmt(mean_ssim)])
    _write_csv_atomic(Path(path), table)


# ---------------------------------------------------------------------------
# Atomic file helpers
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_csv_atomic(path: Path, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    os.replace(tmp, path)
