"""Desk-scale kit: synthetic scene corpus and four small CAM-style CNNs.

Full-scale scene classifiers and their weights are an external dependency;
this module makes the whole pipeline runnable on one machine in minutes.
Each synthetic "scene" is a 32x32 image whose class identity is a landmark:
a pair of smooth color blobs at class-specific anchor positions over a weak
global gradient. Classes share anchors, so they stay confusable under small
perturbations; sharp clutter shapes add class-independent edge texture.
That reproduces the regime the protection masks assume: the recognizable
content is localized and smooth, the texture is mostly distraction. Three
architectures serve as the white-box ensemble and a fourth as the held-out
transfer target.

Run ``locshield-desk all --out DIR`` to build corpus, models, and
descriptors in one go.
"""

from __future__ import annotations

import argparse
import itertools
import sys
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .backends.registry import (
    load_backend,
    register_architecture,
    save_class_names,
    save_descriptor,
)
from .harness import (
    CampaignConfig,
    DatasetManifest,
    ManifestEntry,
    load_manifest,
    save_manifest,
)
from .image_ops import PerturbationConfig, save_image
from .masks import MaskRecipe

IMAGE_SIZE = 32

# Landmark anchors (y, x) and the classes as unordered anchor pairs.
_ANCHORS = ((10, 11), (10, 21), (16, 7), (16, 25), (22, 11), (22, 21))
_CLASS_PAIRS = tuple(itertools.combinations(range(len(_ANCHORS)), 2))
NUM_CLASSES = len(_CLASS_PAIRS)

# (model name, architecture, training-seed offset); the last is held out.
STANDARD_MODELS = (
    ("desk-a", "desk/convnet_a", 101),
    ("desk-b", "desk/convnet_b", 102),
    ("desk-c", "desk/convnet_c", 103),
    ("desk-d", "desk/convnet_d", 104),
)

# Frozen study constants. The comparison study (transfer orderings across
# methods and mask strategies) is only meaningful against one fixed corpus,
# training budget, and evaluation subset; these are that fixture.
STUDY_PER_CLASS = 360
STUDY_EVAL_PER_CLASS = 120
STUDY_CORPUS_SEED = 7
STUDY_EPOCHS = 50
STUDY_SUBSET_SIZE = 500
STUDY_SUBSET_SEED = 3
STUDY_PERTURBATION = PerturbationConfig(epsilon=0.03, steps=20)
STUDY_K = 5


def _anchor_tints() -> np.ndarray:
    phases = 2.0 * np.pi * np.arange(len(_ANCHORS)) / len(_ANCHORS) + 0.3
    third = 2.0 * np.pi / 3.0
    tints = np.stack(
        [np.cos(phases), np.cos(phases - third), np.cos(phases + third)], axis=1
    )
    # Chroma-only tints: with the BT.601 luminance component projected out,
    # blob rims are invisible to grayscale edge detection, so edge-based
    # texture masks trace clutter and never the landmarks.
    luma = np.array([0.299, 0.587, 0.114])
    tints -= np.outer(tints @ luma, luma / (luma @ luma))
    tints /= np.linalg.norm(tints, axis=1, keepdims=True)
    return 0.22 * tints


_TINTS = _anchor_tints()


def _chroma_unit(rng: np.random.Generator) -> np.ndarray:
    """Random unit color direction with zero luminance component."""
    phase = rng.uniform(0.0, 2.0 * np.pi)
    third = 2.0 * np.pi / 3.0
    vec = np.array([np.cos(phase), np.cos(phase - third), np.cos(phase + third)])
    luma = np.array([0.299, 0.587, 0.114])
    vec -= (vec @ luma) * luma / (luma @ luma)
    return vec / np.linalg.norm(vec)


def class_names() -> list[str]:
    return [f"scene{c:02d}" for c in range(NUM_CLASSES)]


# ---------------------------------------------------------------------------
# Scene synthesis
# ---------------------------------------------------------------------------


def render_scene(rng: np.random.Generator, class_id: int) -> np.ndarray:
    """One 32x32 scene: two smooth landmark blobs plus clutter and noise."""
    if not 0 <= class_id < NUM_CLASSES:
        raise ValueError(f"class_id must be in 0..{NUM_CLASSES - 1}, got {class_id}")
    axis = np.arange(IMAGE_SIZE, dtype=np.float64)
    yy, xx = np.meshgrid(axis, axis, indexing="ij")

    # The ramp is deliberately class-independent: every class cue must live
    # in the landmark blobs so attention masks can cover the evidence.
    theta = rng.uniform(0.0, 2.0 * np.pi)
    ramp = (np.cos(theta) * (xx - 15.5) + np.sin(theta) * (yy - 15.5)) / 15.5
    img = np.full((IMAGE_SIZE, IMAGE_SIZE, 3), rng.uniform(0.42, 0.52))
    img += 0.06 * ramp[:, :, None]
    # A random global cast makes mean chroma uninformative: classes are
    # readable only from localized blob structure, not color statistics.
    # The border band carries its own independent cast, so the cast the
    # blobs ride on can only be read off the central background.
    prof = np.ones(IMAGE_SIZE)
    prof[:_CLUTTER_BAND] = np.linspace(0.0, 1.0, _CLUTTER_BAND, endpoint=False)
    prof[-_CLUTTER_BAND:] = prof[:_CLUTTER_BAND][::-1]
    vignette = np.minimum.outer(prof, prof)[:, :, None]
    img += rng.uniform(0.0, 0.10) * vignette * _chroma_unit(rng)
    img += rng.uniform(0.0, 0.10) * (1.0 - vignette) * _chroma_unit(rng)

    def _blob(anchor_idx: int, strength: float) -> None:
        ay, ax = _ANCHORS[anchor_idx]
        cy = ay + rng.uniform(-2.0, 2.0)
        cx = ax + rng.uniform(-2.0, 2.0)
        # Tight envelopes keep the class evidence inside a maskable footprint.
        sigma = rng.uniform(2.4, 3.0)
        envelope = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma**2))
        img[:] += strength * envelope[:, :, None] * _TINTS[anchor_idx][None, None, :]

    pair = _CLASS_PAIRS[class_id]
    for anchor_idx in pair:
        _blob(anchor_idx, rng.uniform(0.85, 1.05))
    # Faint distractor blobs at off-class anchors keep classes confusable.
    others = [i for i in range(len(_ANCHORS)) if i not in pair]
    for anchor_idx in rng.choice(others, size=3, replace=False):
        _blob(int(anchor_idx), rng.uniform(0.2, 0.4))

    for _ in range(int(rng.integers(1, 3))):
        _add_clutter(img, rng)
    img += rng.normal(0.0, rng.uniform(0.01, 0.025), size=img.shape)
    return np.clip(img, 0.0, 1.0)


_CLUTTER_BAND = 5


def _band_origin(h: int, w: int, rng: np.random.Generator) -> tuple[int, int]:
    """Uniform origin for an h x w element inside one border band."""
    side = int(rng.integers(0, 4))
    lo = IMAGE_SIZE - _CLUTTER_BAND
    if side == 0:
        return int(rng.integers(0, _CLUTTER_BAND - h + 1)), int(rng.integers(0, IMAGE_SIZE - w + 1))
    if side == 1:
        return int(rng.integers(lo, IMAGE_SIZE - h + 1)), int(rng.integers(0, IMAGE_SIZE - w + 1))
    if side == 2:
        return int(rng.integers(0, IMAGE_SIZE - h + 1)), int(rng.integers(0, _CLUTTER_BAND - w + 1))
    return int(rng.integers(0, IMAGE_SIZE - h + 1)), int(rng.integers(lo, IMAGE_SIZE - w + 1))


def _add_clutter(img: np.ndarray, rng: np.random.Generator) -> None:
    """Class-independent clutter, confined to the border so landmarks stay clear."""
    kind = rng.integers(0, 3)
    # Near-extreme colors give each scene at least one strong edge, which
    # keeps the relative edge-strength scale dominated by clutter.
    color = np.where(rng.uniform(size=3) < 0.5, rng.uniform(0.02, 0.12, size=3), rng.uniform(0.88, 0.98, size=3))
    if kind == 0:  # filled disk
        r = 2
        y0, x0 = _band_origin(2 * r + 1, 2 * r + 1, rng)
        cy, cx = y0 + r, x0 + r
        yy, xx = np.ogrid[:IMAGE_SIZE, :IMAGE_SIZE]
        img[(yy - cy) ** 2 + (xx - cx) ** 2 <= r * r] = color
    elif kind == 1:  # striped patch
        h, w = (int(v) for v in rng.integers(4, 6, size=2))
        y0, x0 = _band_origin(h, w, rng)
        other = rng.uniform(0.08, 0.92, size=3)
        stripe = (np.arange(w) // 2) % 2 == 0
        patch = img[y0 : y0 + h, x0 : x0 + w]
        patch[:, stripe] = color
        patch[:, ~stripe] = other
    else:  # rectangle outline
        h, w = (int(v) for v in rng.integers(4, 6, size=2))
        y0, x0 = _band_origin(h, w, rng)
        img[y0, x0 : x0 + w] = color
        img[y0 + h - 1, x0 : x0 + w] = color
        img[y0 : y0 + h, x0] = color
        img[y0 : y0 + h, x0 + w - 1] = color


def synthesize_dataset(
    out_dir,
    per_class: int = STUDY_PER_CLASS,
    eval_per_class: int = STUDY_EVAL_PER_CLASS,
    rng_seed: int = STUDY_CORPUS_SEED,
    progress=None,
) -> tuple[Path, Path]:
    """Write train/eval corpora and manifests; returns the manifest paths."""
    out_dir = Path(out_dir)
    names = class_names()
    save_class_names(names, _ensure_dir(out_dir) / "classes.txt")
    manifests = {}
    for split, count, stream in (("train", per_class, 0), ("eval", eval_per_class, 1)):
        rng = np.random.default_rng(np.random.SeedSequence((rng_seed, stream)))
        entries = []
        for class_id, cname in enumerate(names):
            img_dir = _ensure_dir(out_dir / "images" / split / cname)
            for i in range(count):
                image_id = f"{split}_{cname}_{i:03d}"
                path = img_dir / f"{image_id}.png"
                save_image(render_scene(rng, class_id), path)
                entries.append(ManifestEntry(image_id, str(path), class_id))
            if progress is not None:
                progress(f"{split}: rendered {cname} ({count} images)")
        manifest_path = out_dir / f"{split}_manifest.csv"
        save_manifest(DatasetManifest(tuple(entries), tuple(names)), manifest_path)
        manifests[split] = manifest_path
    return manifests["train"], manifests["eval"]


# ---------------------------------------------------------------------------
# Architectures: distinct small convnets, all features -> GAP -> linear so
# every one of them is CAM-capable via the "features" hook.
# ---------------------------------------------------------------------------


class DeskNet(nn.Module):
    def __init__(self, features: nn.Sequential, channels: int, num_classes: int):
        super().__init__()
        self.features = features
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.classifier = nn.Linear(channels, num_classes)

    def forward(self, x):
        return self.classifier(self.pool(self.features(x)).flatten(1))


def _convnet_a(num_classes: int) -> DeskNet:
    features = nn.Sequential(
        nn.Conv2d(3, 20, 3, stride=2, padding=1), nn.ReLU(),
        nn.Conv2d(20, 40, 3, padding=1), nn.ReLU(),
        nn.Conv2d(40, 56, 3, stride=2, padding=1), nn.ReLU(),
        nn.Conv2d(56, 64, 3, padding=1), nn.ReLU(),
    )
    return DeskNet(features, 64, num_classes)


def _convnet_b(num_classes: int) -> DeskNet:
    features = nn.Sequential(
        nn.Conv2d(3, 20, 3, padding=1), nn.ReLU(),
        nn.MaxPool2d(2),
        nn.Conv2d(20, 36, 3, padding=1), nn.ReLU(),
        nn.Conv2d(36, 36, 3, padding=1), nn.ReLU(),
        nn.MaxPool2d(2),
        nn.Conv2d(36, 52, 3, padding=1), nn.ReLU(),
    )
    return DeskNet(features, 52, num_classes)


def _convnet_c(num_classes: int) -> DeskNet:
    features = nn.Sequential(
        nn.Conv2d(3, 16, 3, padding=1), nn.ReLU(),
        nn.Conv2d(16, 28, 3, stride=2, padding=1), nn.ReLU(),
        nn.Conv2d(28, 40, 3, padding=1), nn.ReLU(),
        nn.Conv2d(40, 56, 3, stride=2, padding=1), nn.ReLU(),
    )
    return DeskNet(features, 56, num_classes)


def _convnet_d(num_classes: int) -> DeskNet:
    features = nn.Sequential(
        nn.Conv2d(3, 24, 5, padding=2), nn.ReLU(),
        nn.Conv2d(24, 24, 3, padding=1), nn.ReLU(),
        nn.MaxPool2d(2),
        nn.Conv2d(24, 48, 3, padding=1), nn.ReLU(),
        nn.MaxPool2d(2),
        nn.Conv2d(48, 72, 3, padding=1), nn.ReLU(),
    )
    return DeskNet(features, 72, num_classes)


for _name, _builder in (
    ("desk/convnet_a", _convnet_a),
    ("desk/convnet_b", _convnet_b),
    ("desk/convnet_c", _convnet_c),
    ("desk/convnet_d", _convnet_d),
):
    register_architecture(_name, _builder, cam_layer="features")


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

_NORM_MEAN = [0.5, 0.5, 0.5]
_NORM_STD = [0.5, 0.5, 0.5]


def _paste_clutter(x_batch: torch.Tensor, rng: np.random.Generator) -> torch.Tensor:
    """Stamp fresh random clutter onto a normalized NCHW batch."""
    mean = np.asarray(_NORM_MEAN)
    std = np.asarray(_NORM_STD)
    out = x_batch.clone()
    for i in range(out.shape[0]):
        view = out[i].permute(1, 2, 0).numpy()
        pix = view * std + mean
        for _ in range(int(rng.integers(1, 3))):
            _add_clutter(pix, rng)
        view[:] = (np.clip(pix, 0.0, 1.0) - mean) / std
    return out


def _load_split(manifest: DatasetManifest) -> tuple[torch.Tensor, torch.Tensor]:
    from .image_ops import load_image

    images = np.stack([load_image(e.path) for e in manifest.entries])
    x = torch.from_numpy(images).float().permute(0, 3, 1, 2)
    x = (x - torch.tensor(_NORM_MEAN).reshape(1, 3, 1, 1)) / torch.tensor(_NORM_STD).reshape(1, 3, 1, 1)
    y = torch.tensor([e.label for e in manifest.entries], dtype=torch.long)
    return x, y


def _accuracy(module: nn.Module, x: torch.Tensor, y: torch.Tensor) -> float:
    module.eval()
    hits = 0
    with torch.no_grad():
        for i in range(0, len(x), 256):
            logits = module(x[i : i + 256])
            hits += int((logits.argmax(dim=1) == y[i : i + 256]).sum())
    return hits / len(x)


def train_model(
    architecture: str,
    train_manifest: DatasetManifest,
    eval_manifest: DatasetManifest,
    num_classes: int,
    epochs: int = 6,
    lr: float = 1e-3,
    batch_size: int = 64,
    rng_seed: int = 0,
    noise_augment: float = 0.0,
    clutter_augment: bool = False,
    progress=None,
) -> tuple[nn.Module, float]:
    """Train one architecture; returns (module, eval accuracy)."""
    from .backends.registry import _resolve_architecture

    torch.manual_seed(rng_seed)
    module = _resolve_architecture(architecture)["builder"](num_classes)
    x_train, y_train = _load_split(train_manifest)
    x_eval, y_eval = _load_split(eval_manifest)
    optimizer = torch.optim.Adam(module.parameters(), lr=lr)
    shuffler = np.random.default_rng(rng_seed)
    for epoch in range(epochs):
        module.train()
        order = shuffler.permutation(len(x_train))
        for i in range(0, len(order), batch_size):
            batch = order[i : i + batch_size]
            x_batch = x_train[batch]
            if clutter_augment:
                x_batch = _paste_clutter(x_batch, shuffler)
            if noise_augment > 0.0:
                x_batch = x_batch + noise_augment * torch.randn_like(x_batch)
            optimizer.zero_grad()
            loss = nn.functional.cross_entropy(module(x_batch), y_train[batch])
            loss.backward()
            optimizer.step()
        if progress is not None:
            progress(
                f"{architecture} epoch {epoch + 1}/{epochs}: "
                f"eval acc {_accuracy(module, x_eval, y_eval):.3f}"
            )
    return module, _accuracy(module, x_eval, y_eval)


def train_standard_models(
    data_dir,
    model_dir,
    epochs: int = STUDY_EPOCHS,
    lr: float = 1e-3,
    batch_size: int = 64,
    rng_seed: int = STUDY_CORPUS_SEED,
    progress=None,
) -> dict[str, float]:
    """Train the three white-box models plus the held-out one; emit descriptors."""
    data_dir, model_dir = Path(data_dir), _ensure_dir(Path(model_dir))
    train_manifest = load_manifest(data_dir / "train_manifest.csv")
    eval_manifest = load_manifest(data_dir / "eval_manifest.csv")
    num_classes = max(train_manifest.max_label(), eval_manifest.max_label()) + 1
    accuracies = {}
    heldout_name = STANDARD_MODELS[-1][0]
    for name, architecture, seed_offset in STANDARD_MODELS:
        fit_manifest = train_manifest
        if name != heldout_name:
            # Each white-box model overfits its own slice, with a seeded
            # share of labels confused toward anchor-sharing neighbors.
            # Memorizing different mistakes is what keeps the members'
            # decision boundaries apart; the held-out model trains clean.
            picker = np.random.default_rng(rng_seed + seed_offset)
            keep = picker.permutation(len(train_manifest))[
                : int(0.45 * len(train_manifest))
            ]
            entries = [train_manifest.entries[i] for i in sorted(keep)]
            for idx in picker.choice(len(entries), size=int(0.12 * len(entries)), replace=False):
                entry = entries[idx]
                pair = _CLASS_PAIRS[entry.label]
                neighbors = [
                    c
                    for c, p in enumerate(_CLASS_PAIRS)
                    if c != entry.label and (p[0] in pair or p[1] in pair)
                ]
                entries[idx] = ManifestEntry(
                    entry.image_id, entry.path, int(picker.choice(neighbors))
                )
            fit_manifest = DatasetManifest(
                entries=tuple(entries), class_names=train_manifest.class_names
            )
        module, acc = train_model(
            architecture,
            fit_manifest,
            eval_manifest,
            num_classes,
            # Extra epochs and noise augmentation push the held-out model's
            # margins up, which is what makes it a meaningful transfer target.
            epochs=epochs + 10 if name == heldout_name else epochs,
            lr=lr,
            noise_augment=0.04 if name == heldout_name else 0.0,
            clutter_augment=name == heldout_name,
            batch_size=batch_size,
            rng_seed=rng_seed + seed_offset,
            progress=progress,
        )
        torch.save(module.state_dict(), model_dir / f"{name}.pt")
        save_descriptor(
            {
                "name": name,
                "architecture": architecture,
                "weights_uri": f"{name}.pt",
                "num_classes": num_classes,
                "input_size": [IMAGE_SIZE, IMAGE_SIZE],
                "normalization_mean": _NORM_MEAN,
                "normalization_std": _NORM_STD,
                "cam_capable": True,
            },
            model_dir / f"{name}.json",
        )
        accuracies[name] = acc
        if progress is not None:
            progress(f"saved {name} (eval acc {acc:.3f})")
    return accuracies


def standard_descriptors(model_dir) -> tuple[list[str], str]:
    """(white-box descriptor paths, held-out descriptor path) under model_dir."""
    model_dir = Path(model_dir)
    paths = [str(model_dir / f"{name}.json") for name, _, _ in STANDARD_MODELS]
    return paths[:-1], paths[-1]


def load_standard_models(model_dir):
    """(white-box handles, held-out handle) from a train_standard_models dir."""
    train_paths, heldout_path = standard_descriptors(model_dir)
    return [load_backend(p) for p in train_paths], load_backend(heldout_path)


def study_mask_recipes() -> dict[str, MaskRecipe]:
    """Mask recipes scaled to 32x32 scenes.

    The landmarks span a few pixels, so the activation-map threshold drops
    and edge dilation shrinks relative to the full-resolution defaults;
    otherwise the masks either swallow the frame or miss the landmark tails.
    """
    return {
        "cam_union": MaskRecipe(strategy="cam_union", cam_threshold=0.10),
        "cam_intersection": MaskRecipe(strategy="cam_intersection", cam_threshold=0.10),
        "hv_nontexture": MaskRecipe(
            strategy="hv_nontexture", dilation_radius=1, dilation_iterations=1
        ),
        "hv_texture": MaskRecipe(
            strategy="hv_texture", dilation_radius=1, dilation_iterations=1
        ),
    }


def study_campaigns(model_dir, out_root) -> list[CampaignConfig]:
    """The standard method grid over the four standard models.

    One campaign per method: both baselines, single-model PGD per ensemble
    member, ensemble PGD over the entire image, and masked ensemble PGD for
    each strategy in ``study_mask_recipes``. Single-model campaigns still
    score desk-d, so every campaign reports white-box and transfer columns.
    """
    train_paths, heldout_path = standard_descriptors(model_dir)
    out_root = Path(out_root)

    def _cfg(name: str, method: str, train_models, mask_recipe=None) -> CampaignConfig:
        return CampaignConfig(
            name=name,
            method=method,
            out_dir=str(out_root / name),
            train_models=tuple(train_models),
            heldout_models=(heldout_path,),
            perturbation=STUDY_PERTURBATION,
            mask_recipe=mask_recipe,
            k=STUDY_K,
            rng_seed=0,
        )

    campaigns = [
        _cfg("no_attack", "no_attack", train_paths),
        _cfg("random_noise", "random_noise", train_paths),
    ]
    for (name, _, _), path in zip(STANDARD_MODELS[:-1], train_paths):
        campaigns.append(_cfg(f"pgd_{name}", "pgd", [path]))
    campaigns.append(_cfg("m_pgd", "m_pgd", train_paths))
    for recipe_name, recipe in study_mask_recipes().items():
        campaigns.append(
            _cfg(f"mm_pgd_{recipe_name}", "mm_pgd", train_paths, mask_recipe=recipe)
        )
    return campaigns


def _ensure_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# Script entry points
# ---------------------------------------------------------------------------


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="locshield-desk",
        description="Synthesize the desk-scale scene corpus and train its models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate the synthetic scene corpus")
    synth.add_argument("--out", required=True, help="corpus output directory")
    synth.add_argument("--per-class", type=int, default=STUDY_PER_CLASS)
    synth.add_argument("--eval-per-class", type=int, default=STUDY_EVAL_PER_CLASS)
    synth.add_argument("--seed", type=int, default=STUDY_CORPUS_SEED)

    train = sub.add_parser("train", help="train one architecture on a corpus")
    train.add_argument("--data", required=True, help="directory from `synth`")
    train.add_argument("--arch", required=True, help="e.g. desk/convnet_a")
    train.add_argument("--name", required=True, help="model/descriptor name")
    train.add_argument("--out", required=True, help="descriptor/weights directory")
    train.add_argument("--epochs", type=int, default=STUDY_EPOCHS)
    train.add_argument("--lr", type=float, default=1e-3)
    train.add_argument("--batch", type=int, default=64)
    train.add_argument("--seed", type=int, default=0)

    everything = sub.add_parser("all", help="synth + train the standard four models")
    everything.add_argument("--out", required=True, help="root directory for data/ and models/")
    everything.add_argument("--per-class", type=int, default=STUDY_PER_CLASS)
    everything.add_argument("--eval-per-class", type=int, default=STUDY_EVAL_PER_CLASS)
    everything.add_argument("--epochs", type=int, default=STUDY_EPOCHS)
    everything.add_argument("--seed", type=int, default=STUDY_CORPUS_SEED)

    args = parser.parse_args(argv)
    if args.command == "synth":
        train_m, eval_m = synthesize_dataset(
            args.out, args.per_class, args.eval_per_class, args.seed, progress=_say
        )
        print(train_m)
        print(eval_m)
        return 0
    if args.command == "train":
        data_dir = Path(args.data)
        train_manifest = load_manifest(data_dir / "train_manifest.csv")
        eval_manifest = load_manifest(data_dir / "eval_manifest.csv")
        num_classes = max(train_manifest.max_label(), eval_manifest.max_label()) + 1
        module, acc = train_model(
            args.arch,
            train_manifest,
            eval_manifest,
            num_classes,
            epochs=args.epochs,
            lr=args.lr,
            batch_size=args.batch,
            rng_seed=args.seed,
            progress=_say,
        )
        out = _ensure_dir(Path(args.out))
        torch.save(module.state_dict(), out / f"{args.name}.pt")
        save_descriptor(
            {
                "name": args.name,
                "architecture": args.arch,
                "weights_uri": f"{args.name}.pt",
                "num_classes": num_classes,
                "input_size": [IMAGE_SIZE, IMAGE_SIZE],
                "normalization_mean": _NORM_MEAN,
                "normalization_std": _NORM_STD,
                "cam_capable": True,
            },
            out / f"{args.name}.json",
        )
        print(f"{args.name}: eval accuracy {acc:.3f}")
        return 0
    root = Path(args.out)
    synthesize_dataset(root / "data", args.per_class, args.eval_per_class, args.seed, progress=_say)
    accuracies = train_standard_models(
        root / "data", root / "models", epochs=args.epochs, rng_seed=args.seed, progress=_say
    )
    for name, acc in accuracies.items():
        print(f"{name}: eval accuracy {acc:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
