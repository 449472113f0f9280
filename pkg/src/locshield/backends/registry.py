"""Backend plug-in registry and descriptor files.

A descriptor is a JSON file describing one classifier:

    {
      "name": "resnet18-places",
      "architecture": "torchvision/resnet18",
      "weights_uri": "weights/resnet18.pt",
      "num_classes": 365,
      "input_size": [224, 224],
      "normalization_mean": [0.485, 0.456, 0.406],
      "normalization_std": [0.229, 0.224, 0.225],
      "cam_capable": true
    }

Optional keys: "cam_layer" (dotted submodule name feeding global pooling;
inferred for known torchvision families), "in_channels" (default 3).
Relative weight paths resolve against the descriptor's directory, then
against $LOCSHIELD_MODEL_DIR. Architectures resolve from the local registry,
"torchvision/<builder>", "desk/<name>" (bundled small CNNs), or
"python:<module>:<callable>" for user code.
"""

from __future__ import annotations

import importlib
import json
import os
from pathlib import Path

import torch

from .torch_backend import TorchClassifier

REQUIRED_FIELDS = (
    "name",
    "architecture",
    "weights_uri",
    "num_classes",
    "input_size",
    "normalization_mean",
    "normalization_std",
    "cam_capable",
)

_REGISTRY: dict[str, dict] = {}

# Conventional hook points for torchvision families that end in GAP + Linear.
_TORCHVISION_CAM_LAYERS = {"resnet": "layer4", "wide_resnet": "layer4", "densenet": "features"}


def register_architecture(name: str, builder, cam_layer: str | None = None, in_channels: int = 3):
    """Register ``builder(num_classes) -> nn.Module`` under ``name``."""
    _REGISTRY[name] = {"builder": builder, "cam_layer": cam_layer, "in_channels": in_channels}


def _resolve_architecture(name: str) -> dict:
    if name in _REGISTRY:
        return _REGISTRY[name]
    if name.startswith("desk/"):
        importlib.import_module("locshield.desk")  # registers the bundled CNNs
        if name in _REGISTRY:
            return _REGISTRY[name]
        raise KeyError(f"unknown desk architecture {name!r}")
    if name.startswith("torchvision/"):
        import torchvision.models as tvm

        fn_name = name.split("/", 1)[1]
        builder = getattr(tvm, fn_name, None)
        if builder is None:
            raise KeyError(f"torchvision has no model builder {fn_name!r}")
        cam_layer = None
        for prefix, layer in _TORCHVISION_CAM_LAYERS.items():
            if fn_name.startswith(prefix):
                cam_layer = layer
                break
        return {"builder": lambda n, _b=builder: _b(num_classes=n), "cam_layer": cam_layer, "in_channels": 3}
    if name.startswith("python:"):
        _, module_name, attr = name.split(":", 2)
        builder = getattr(importlib.import_module(module_name), attr)
        return {"builder": builder, "cam_layer": None, "in_channels": 3}
    raise KeyError(f"unknown architecture {name!r}")


def load_descriptor(path) -> dict:
    """Read and validate a descriptor JSON file."""
    path = Path(path)
    with open(path) as f:
        desc = json.load(f)
    missing = [k for k in REQUIRED_FIELDS if k not in desc]
    if missing:
        raise ValueError(f"{path}: descriptor missing fields {missing}")
    if int(desc["num_classes"]) < 2:
        raise ValueError(f"{path}: num_classes must be >= 2")
    desc["_dir"] = str(path.parent)
    return desc


def save_descriptor(desc: dict, path) -> None:
    missing = [k for k in REQUIRED_FIELDS if k not in desc]
    if missing:
        raise ValueError(f"descriptor missing fields {missing}")
    clean = {k: v for k, v in desc.items() if not k.startswith("_")}
    with open(path, "w") as f:
        json.dump(clean, f, indent=2)
        f.write("\n")


def _resolve_weights(uri: str, descriptor_dir: str | None) -> str:
    uri = os.path.expandvars(uri)
    if os.path.isabs(uri):
        return uri
    if descriptor_dir:
        local = os.path.join(descriptor_dir, uri)
        if os.path.exists(local):
            return local
    root = os.environ.get("LOCSHIELD_MODEL_DIR")
    if root:
        rooted = os.path.join(root, uri)
        if os.path.exists(rooted):
            return rooted
    return uri


def load_backend(descriptor, device: str = "cpu") -> TorchClassifier:
    """Instantiate a classifier from a descriptor dict or JSON path."""
    if not isinstance(descriptor, dict):
        descriptor = load_descriptor(descriptor)
    arch = _resolve_architecture(descriptor["architecture"])
    num_classes = int(descriptor["num_classes"])
    module = arch["builder"](num_classes)
    uri = descriptor.get("weights_uri")
    if uri:
        weights_path = _resolve_weights(uri, descriptor.get("_dir"))
        if not os.path.exists(weights_path):
            raise FileNotFoundError(
                f"weights for {descriptor['name']!r} not found at {weights_path!r} "
                f"(set LOCSHIELD_MODEL_DIR or use an absolute weights_uri)"
            )
        state = torch.load(weights_path, map_location=device, weights_only=True)
        if isinstance(state, dict) and "state_dict" in state:
            state = state["state_dict"]
        state = { (k[7:] if k.startswith("module.") else k): v for k, v in state.items() }
        module.load_state_dict(state)
    cam_layer = descriptor.get("cam_layer") or arch.get("cam_layer")
    if not descriptor["cam_capable"]:
        cam_layer = None
    return TorchClassifier(
        module,
        name=descriptor["name"],
        num_classes=num_classes,
        input_size=tuple(descriptor["input_size"]),
        mean=descriptor["normalization_mean"],
        std=descriptor["normalization_std"],
        cam_layer=cam_layer,
        in_channels=int(descriptor.get("in_channels", arch.get("in_channels", 3))),
        device=device,
    )


def load_class_names(path) -> list[str]:
    """Class-vocabulary file: one category name per line, index = line number."""
    with open(path) as f:
        return [line.rstrip("\n") for line in f if line.strip() != ""]


def save_class_names(names, path) -> None:
    with open(path, "w") as f:
        for n in names:
            f.write(f"{n}\n")
