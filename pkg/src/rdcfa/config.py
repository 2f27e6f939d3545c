"""Flat dotted-key configuration: defaults < config file < CLI overrides.

Config files are plain text, one ``key = value`` per line, ``#`` comments.
Every known key and its default is listed in DEFAULTS so ``--help`` and run
manifests can enumerate them.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .exceptions import ConfigError

# key -> (default, type, help)
DEFAULTS: dict[str, tuple[Any, type, str]] = {
    "data.root": ("", str, "dataset root directory (MVTec layout)"),
    "data.image_size": (256, int, "square input resolution images are resized to"),
    "backbone.name": ("wide_resnet50", str, "backbone: wide_resnet50 | tiny"),
    "backbone.seed": (0, int, "weight seed for the tiny test backbone"),
    "descriptor.output_dim": (0, int, "descriptor output channels; 0 = same as input"),
    "descriptor.coords": (True, bool, "append normalized coordinate channels"),
    "disc.latent_dim": (128, int, "latent dimensionality of the Gaussian heads"),
    "cfa.k": (3, int, "attraction neighbor count"),
    "cfa.j": (3, int, "hard-negative count"),
    "cfa.r_sq": (0.0, float, "squared hypersphere radius; 0 = 1e-5 * output_dim"),
    "cfa.alpha": (-1.0, float, "repulsion margin; negative = 0.1 * r_sq"),
    "cfa.alpha_kl": (0.5, float, "weight of the divergence loss"),
    "cfa.alpha_dr": (0.1, float, "weight of the anchor-repulsion loss"),
    "cfa.rho": (10.0, float, "minimum squared distance between class anchors"),
    "train.epochs": (10, int, "training epochs"),
    "train.batch_size": (4, int, "samples per training batch"),
    "train.lr": (1e-3, float, "learning rate"),
    "train.weight_decay": (5e-4, float, "decoupled weight decay"),
    "train.seed": (0, int, "base seed; run seeds derive from it"),
    "train.runs": (5, int, "repeated runs averaged by the evaluation harness"),
    "train.augment_bank": (True, bool, "store Gaussian statistics in the bank"),
    "train.refresh_bank": (True, bool, "rebuild the bank after every epoch"),
    "train.use_dissimilarity": (True, bool, "weight anchor repulsion by the batch dissimilarity matrix"),
    "train.val_fraction": (0.1, float, "training fraction held out for loss monitoring"),
    "score.sigma": (4.0, float, "Gaussian smoothing std-dev in input pixels"),
    "score.threshold": (0.5, float, "binarization threshold for emitted masks (arbitrary)"),
}


def _parse_value(raw: str, typ: type, key: str) -> Any:
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value {raw!r} for key {key!r} ({typ.__name__})") from exc


@dataclass
class Config:
    values: dict[str, Any]

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def snapshot(self) -> dict[str, Any]:
        return dict(self.values)

    @classmethod
    def load(
        cls, path: Path | str | None = None, overrides: list[str] | None = None
    ) -> "Config":
        values = {k: v for k, (v, _, _) in DEFAULTS.items()}
        if path is not None:
            values.update(_parse_file(Path(path)))
        for item in overrides or []:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value")
            key, raw = item.split("=", 1)
            key = key.strip()
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _parse_value(raw, DEFAULTS[key][1], key)
        return cls(values=values)


def _parse_file(path: Path) -> dict[str, Any]:
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    out: dict[str, Any] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = _parse_value(raw, DEFAULTS[key][1], key)
    return out


def describe_defaults() -> str:
    """One line per config key, for --help output."""
    lines = []
    for key, (default, _, help_text) in DEFAULTS.items():
        lines.append(f"  {key} = {default!r}  # {help_text}")
    return "\n".join(lines)
