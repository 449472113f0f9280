"""Session fixtures, most notably the desk kit (corpus + standard models).

The desk kit is expensive, so it is session-scoped and honours
LOCSHIELD_TEST_CACHE: point that at a writable directory to keep corpus,
weights, and campaign artifacts between runs. Without it everything builds
fresh under pytest's tmp factory, which retrains the four models and takes
a few minutes on CPU.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import pytest

from locshield import desk
from locshield.harness import DatasetManifest, load_manifest
from locshield.image_ops import load_image


@dataclass
class DeskKit:
    root: Path
    data_dir: Path
    model_dir: Path
    train_manifest: DatasetManifest
    eval_manifest: DatasetManifest
    members: list
    heldout: object

    @property
    def all_models(self):
        return list(self.members) + [self.heldout]


@pytest.fixture(scope="session")
def desk_kit(tmp_path_factory) -> DeskKit:
    cache = os.environ.get("LOCSHIELD_TEST_CACHE")
    root = Path(cache).resolve() if cache else tmp_path_factory.mktemp("desk")
    data_dir = root / "data"
    model_dir = root / "models"
    if not (data_dir / "eval_manifest.csv").is_file():
        desk.synthesize_dataset(data_dir)
    wanted = []
    for name, _, _ in desk.STANDARD_MODELS:
        wanted += [model_dir / f"{name}.json", model_dir / f"{name}.pt"]
    if not all(p.is_file() for p in wanted):
        desk.train_standard_models(data_dir, model_dir)
    members, heldout = desk.load_standard_models(model_dir)
    return DeskKit(
        root=root,
        data_dir=data_dir,
        model_dir=model_dir,
        train_manifest=load_manifest(data_dir / "train_manifest.csv"),
        eval_manifest=load_manifest(data_dir / "eval_manifest.csv"),
        members=members,
        heldout=heldout,
    )


@pytest.fixture(scope="session")
def desk_images(desk_kit):
    """First 50 eval images (by manifest order) with labels, loaded once."""
    entries = desk_kit.eval_manifest.entries[:50]
    return [(e.image_id, load_image(e.path), e.label) for e in entries]
