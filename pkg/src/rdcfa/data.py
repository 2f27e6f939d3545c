"""Dataset ingestion and a deterministic synthetic multi-class generator.

Directory layout (MVTec convention, also used for synthetic data):

    <root>/<class>/train/good/*.png
    <root>/<class>/test/good/*.png
    <root>/<class>/test/<defect>/*.png
    <root>/<class>/ground_truth/<defect>/<name>_mask.png

Masks are 8-bit PNGs, nonzero = anomalous.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .exceptions import DataError

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")

# fixed normalization constants, recorded here for reproducibility
NORM_MEAN = (0.485, 0.456, 0.406)
NORM_STD = (0.229, 0.224, 0.225)


@dataclass
class Sample:
    path: Path
    label: int
    split: str  # "train" | "test"
    is_anomalous: bool
    mask_path: Path | None = None


@dataclass
class SyntheticSpec:
    n_classes: int = 3
    image_size: int = 64
    train_per_class: int = 20
    test_per_class: int = 10
    patch_size_range: tuple[int, int] = (12, 24)
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise DataError("synthetic spec needs at least 2 classes")
        if self.image_size <= 0 or self.train_per_class <= 0 or self.test_per_class <= 0:
            raise DataError("sizes must be positive")


class AnomalyDataset:
    """Multi-class dataset: unified training pool, per-class test sets."""

    def __init__(
        self,
        class_names: list[str],
        train_samples: list[Sample],
        test_sets: dict[str, list[Sample]],
        image_size: int = 256,
    ):
        self.class_names = class_names
        self.train_samples = train_samples
        self.test_sets = test_sets
        self.image_size = image_size

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def load_image(self, sample: Sample) -> torch.Tensor:
        """8-bit RGB file -> normalized float tensor (3, S, S)."""
        return load_image(sample.path, self.image_size)

    def load_mask(self, sample: Sample) -> np.ndarray:
        """Ground-truth mask resized to the image resolution, bool (S, S)."""
        if sample.mask_path is None:
            return np.zeros((self.image_size, self.image_size), dtype=bool)
        img = Image.open(sample.mask_path).convert("L")
        img = img.resize((self.image_size, self.image_size), Image.NEAREST)
        return np.asarray(img) > 0

    def split_validation(self, fraction: float, seed: int) -> tuple[list[Sample], list[Sample]]:
        """Deterministic held-out slice of the training pool (loss monitoring)."""
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(self.train_samples))
        n_val = int(round(fraction * len(self.train_samples)))
        val_idx = set(order[:n_val].tolist())
        train = [s for i, s in enumerate(self.train_samples) if i not in val_idx]
        val = [s for i, s in enumerate(self.train_samples) if i in val_idx]
        return train, val


def load_image(path: Path | str, image_size: int) -> torch.Tensor:
    img = Image.open(path).convert("RGB")
    if img.size != (image_size, image_size):
        img = img.resize((image_size, image_size), Image.BILINEAR)
    arr = np.asarray(img, dtype=np.float32) / 255.0
    arr = (arr - np.array(NORM_MEAN, dtype=np.float32)) / np.array(
        NORM_STD, dtype=np.float32
    )
    return torch.from_numpy(arr.transpose(2, 0, 1).copy())


def _image_files(directory: Path) -> list[Path]:
    return sorted(
        p for p in directory.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS
    )


def load_dataset(root: Path | str, image_size: int = 256) -> AnomalyDataset:
    """Read an MVTec-layout tree into one multi-class dataset."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} is not a directory")
    class_names = sorted(d.name for d in root.iterdir() if d.is_dir())
    if not class_names:
        raise DataError(f"no class directories under {root}")

    train_samples: list[Sample] = []
    test_sets: dict[str, list[Sample]] = {}
    for label, name in enumerate(class_names):
        class_dir = root / name
        good_dir = class_dir / "train" / "good"
        if not good_dir.is_dir():
            raise DataError(f"class {name!r} is missing train/good")
        for path in _image_files(good_dir):
            train_samples.append(
                Sample(path=path, label=label, split="train", is_anomalous=False)
            )

        tests: list[Sample] = []
        test_dir = class_dir / "test"
        if test_dir.is_dir():
            for defect_dir in sorted(d for d in test_dir.iterdir() if d.is_dir()):
                defect = defect_dir.name
                anomalous = defect != "good"
                gt_dir = class_dir / "ground_truth" / defect
                missing = []
                for path in _image_files(defect_dir):
                    mask_path = None
                    if anomalous and gt_dir.is_dir():
                        candidate = gt_dir / f"{path.stem}_mask.png"
                        if candidate.exists():
                            mask_path = candidate
                        else:
                            missing.append(str(candidate))
                    tests.append(
                        Sample(
                            path=path,
                            label=label,
                            split="test",
                            is_anomalous=anomalous,
                            mask_path=mask_path,
                        )
                    )
                if anomalous and gt_dir.is_dir() and missing:
                    raise DataError(
                        f"class {name!r} defect {defect!r}: missing masks: "
                        + ", ".join(missing)
                    )
        test_sets[name] = tests
    return AnomalyDataset(class_names, train_samples, test_sets, image_size=image_size)


# ---------------------------------------------------------------------------
# synthetic generator
# ---------------------------------------------------------------------------


def _texture(kind: int, size: int, period: float, angle: float, phase: float) -> np.ndarray:
    """Procedural texture field in [0, 1]; kind selects the pattern family."""
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    if kind == 0:  # oriented stripes
        coord = xs * np.cos(angle) + ys * np.sin(angle)
        return 0.5 + 0.45 * np.sin(2 * np.pi * coord / period + phase)
    if kind == 1:  # checkerboard
        ox, oy = phase * period, phase * period / 2
        return (((xs + ox) // period + (ys + oy) // period) % 2) * 0.8 + 0.1
    # dots on a grid
    gx = (xs + phase * period) % period - period / 2
    gy = (ys + phase * period / 3) % period - period / 2
    return np.where(gx**2 + gy**2 < (period / 4) ** 2, 0.85, 0.15)


def _class_texture_params(label: int, rng: np.random.Generator) -> dict:
    return {
        "kind": label % 3,
        "period": float(rng.uniform(6, 10)) * (1 + label // 3),
        "angle": float(rng.uniform(0, np.pi)),
    }


def _render(params: dict, size: int, rng: np.random.Generator) -> np.ndarray:
    # small phase jitter keeps per-class structure stable across images
    phase = float(rng.uniform(0, 0.1))
    field = _texture(params["kind"], size, params["period"], params["angle"], phase)
    field = field + rng.normal(0, 0.02, size=field.shape)
    return np.clip(field, 0, 1)


def _save_gray_rgb(field: np.ndarray, path: Path) -> None:
    arr = (np.clip(field, 0, 1) * 255).astype(np.uint8)
    Image.fromarray(np.stack([arr] * 3, axis=-1)).save(path)


def generate_synthetic(spec: SyntheticSpec, root: Path | str) -> Path:
    """Write a fully seeded multi-class dataset tree in the standard layout.

    Each class is a distinct procedural texture; abnormal test images carry a
    rectangle of a foreign class's texture with an exact ground-truth mask.
    """
    root = Path(root)
    rng = np.random.default_rng(spec.seed)
    params = [_class_texture_params(c, rng) for c in range(spec.n_classes)]
    size = spec.image_size
    lo, hi = spec.patch_size_range
    placements: dict[str, list[int]] = {}

    for label in range(spec.n_classes):
        name = f"class_{label:02d}"
        train_dir = root / name / "train" / "good"
        good_dir = root / name / "test" / "good"
        defect_dir = root / name / "test" / "defect"
        gt_dir = root / name / "ground_truth" / "defect"
        for d in (train_dir, good_dir, defect_dir, gt_dir):
            d.mkdir(parents=True, exist_ok=True)

        for i in range(spec.train_per_class):
            _save_gray_rgb(_render(params[label], size, rng), train_dir / f"{i:03d}.png")

        n_good = spec.test_per_class // 2
        for i in range(n_good):
            _save_gray_rgb(_render(params[label], size, rng), good_dir / f"{i:03d}.png")
        for i in range(spec.test_per_class - n_good):
            field = _render(params[label], size, rng)
            ph = int(rng.integers(lo, hi + 1))
            pw = int(rng.integers(lo, hi + 1))
            y0 = int(rng.integers(0, size - ph + 1))
            x0 = int(rng.integers(0, size - pw + 1))
            # defect texture foreign to every class: bandlimited pixel noise
            patch = np.clip(
                0.5 + 1.5 * rng.normal(0, 0.35, size=(ph, pw)), 0, 1
            )
            field[y0 : y0 + ph, x0 : x0 + pw] = patch
            mask = np.zeros((size, size), dtype=np.uint8)
            mask[y0 : y0 + ph, x0 : x0 + pw] = 255
            _save_gray_rgb(field, defect_dir / f"{i:03d}.png")
            mask_path = gt_dir / f"{i:03d}_mask.png"
            Image.fromarray(mask).save(mask_path)
            placements[str(mask_path.relative_to(root))] = [y0, x0, ph, pw]
    # placement record for cross-checking masks; not part of the class layout
    (root / "placements.json").write_text(
        json.dumps(placements, indent=2, sort_keys=True) + "\n"
    )
    return root
