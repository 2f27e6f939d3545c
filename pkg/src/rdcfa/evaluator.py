"""AUROC evaluation, per-class report tables, and ablation grids."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .data import AnomalyDataset
from .exceptions import DataError
from .memory_bank import MemoryBank
from .model import RdCfaModel
from .scorer import score_image

# texture classes of the 15-class industrial benchmark; everything else
# in a dataset counts as an object class
TEXTURE_CLASSES = frozenset({"carpet", "grid", "leather", "tile", "wood"})


def auroc(scores, labels) -> float:
    """Probability a random positive outranks a random negative, ties at 1/2.

    Rank-statistic form of the area under the ROC curve."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int(labels.sum())
    n_neg = int(len(labels) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DataError("auroc needs both positive and negative labels")
    ranks = rankdata(scores)  # average ranks handle ties as 1/2
    pos_rank_sum = ranks[labels.astype(bool)].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


@dataclass
class ClassResult:
    name: str
    detection: float | None
    localization: float | None


@dataclass
class ReportTable:
    classes: list[ClassResult]
    averages: list[ClassResult]
    n_runs: int = 1
    per_run: list[list[ClassResult]] | None = None

    def row(self, name: str) -> ClassResult:
        for r in self.classes + self.averages:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_text(self) -> str:
        rows = self.classes + self.averages
        name_w = max(len(r.name) for r in rows) + 2
        lines = [
            f"{'Category':<{name_w}}{'Detection':>10}{'Localization':>14}"
            f"   (mean of {self.n_runs} run{'s' if self.n_runs != 1 else ''})"
        ]
        for r in rows:
            det = f"{r.detection:.3f}" if r.detection is not None else "-"
            loc = f"{r.localization:.3f}" if r.localization is not None else "-"
            lines.append(f"{r.name:<{name_w}}{det:>10}{loc:>14}")
        return "\n".join(lines)

    def to_csv(self, path: Path | str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["category", "detection_auroc", "localization_auroc", "is_average", "n_runs"]
            )
            for r in self.classes:
                writer.writerow([r.name, _fmt(r.detection), _fmt(r.localization), 0, self.n_runs])
            for r in self.averages:
                writer.writerow([r.name, _fmt(r.detection), _fmt(r.localization), 1, self.n_runs])
            if self.per_run:
                for i, run in enumerate(self.per_run):
                    for r in run:
                        writer.writerow(
                            [f"run{i}:{r.name}", _fmt(r.detection), _fmt(r.localization), 0, 1]
                        )


def _fmt(v: float | None) -> str:
    return "" if v is None else f"{v:.6f}"


def _averages(classes: list[ClassResult]) -> list[ClassResult]:
    """Object/texture/total averages when both groups are present, a single
    'Average' row otherwise."""

    def mean_of(rows: list[ClassResult], name: str) -> ClassResult:
        det = [r.detection for r in rows if r.detection is not None]
        loc = [r.localization for r in rows if r.localization is not None]
        return ClassResult(
            name=name,
            detection=float(np.mean(det)) if det else None,
            localization=float(np.mean(loc)) if loc else None,
        )

    tex = [r for r in classes if r.name in TEXTURE_CLASSES]
    obj = [r for r in classes if r.name not in TEXTURE_CLASSES]
    if tex and obj:
        return [
            mean_of(obj, "avg. obj."),
            mean_of(tex, "avg. tex."),
            mean_of(classes, "avg. total"),
        ]
    return [mean_of(classes, "Average")]


def evaluate(
    model: RdCfaModel,
    bank: MemoryBank,
    dataset: AnomalyDataset,
    sigma: float = 4.0,
) -> ReportTable:
    """Score every per-class test set; detection from image scores,
    localization from pooled per-pixel scores against the masks."""
    results: list[ClassResult] = []
    for name in dataset.class_names:
        samples = dataset.test_sets.get(name, [])
        if not samples:
            raise DataError(f"class {name!r} has no test samples")
        # masks missing for any anomalous sample -> localization absent
        pool_pixels = all(
            s.mask_path is not None for s in samples if s.is_anomalous
        ) and any(s.is_anomalous for s in samples)
        image_scores, image_labels = [], []
        pixel_scores, pixel_labels = [], []
        for sample in samples:
            amap = score_image(dataset.load_image(sample), model, bank, sigma=sigma)
            image_scores.append(amap.image_score)
            image_labels.append(int(sample.is_anomalous))
            if pool_pixels:
                mask = dataset.load_mask(sample)
                pixel_scores.append(amap.pixel_scores.ravel())
                pixel_labels.append(mask.ravel().astype(np.int8))
        detection = auroc(image_scores, image_labels)
        localization = None
        if pool_pixels:
            localization = auroc(
                np.concatenate(pixel_scores), np.concatenate(pixel_labels)
            )
        results.append(
            ClassResult(name=name, detection=detection, localization=localization)
        )
    return ReportTable(classes=results, averages=_averages(results))


def average_tables(tables: list[ReportTable]) -> ReportTable:
    """Element-wise mean of per-class values across repeated runs."""
    base = tables[0]
    classes = []
    for i, ref in enumerate(base.classes):
        det = [t.classes[i].detection for t in tables]
        loc = [t.classes[i].localization for t in tables]
        classes.append(
            ClassResult(
                name=ref.name,
                detection=None if any(d is None for d in det) else float(np.mean(det)),
                localization=None if any(v is None for v in loc) else float(np.mean(loc)),
            )
        )
    return ReportTable(
        classes=classes,
        averages=_averages(classes),
        n_runs=len(tables),
        per_run=[t.classes for t in tables],
    )


def evaluate_runs(train_config, dataset: AnomalyDataset, n_runs: int, sigma: float = 4.0) -> ReportTable:
    """Train and evaluate n_runs models with seeds derived from the base seed."""
    from .trainer import derived_seeds, train  # local import avoids a cycle

    tables = []
    for seed in derived_seeds(train_config.seed, n_runs):
        model, bank, _ = train(replace(train_config, seed=seed), dataset)
        tables.append(evaluate(model, bank, dataset, sigma=sigma))
    return average_tables(tables)


@dataclass
class AblationRow:
    flags: dict[str, bool]
    detection: float | None
    localization: float | None


def ablation_table(
    dataset: AnomalyDataset,
    base_config,
    grid: str = "flags",
    n_runs: int = 1,
    sigma: float = 4.0,
) -> list[AblationRow]:
    """Train/evaluate over a flag grid.

    grid="flags": the 2x2 {augment_bank, refresh_bank} grid.
    grid="dissimilarity": the use_dissimilarity off/on pair.
    """
    if grid == "flags":
        combos = [
            {"augment_bank": a, "refresh_bank": r}
            for a in (False, True)
            for r in (False, True)
        ]
        # conventional presentation order: none, each alone, both
        combos = [combos[0], combos[2], combos[1], combos[3]]
    elif grid == "dissimilarity":
        combos = [{"use_dissimilarity": d} for d in (False, True)]
    else:
        raise DataError(f"unknown ablation grid {grid!r}")

    rows = []
    for combo in combos:
        cfg = replace(base_config, **combo)
        table = evaluate_runs(cfg, dataset, n_runs, sigma=sigma)
        total = table.averages[-1]
        rows.append(
            AblationRow(
                flags=dict(combo),
                detection=total.detection,
                localization=total.localization,
            )
        )
    return rows


def ablation_csv(rows: list[AblationRow], path: Path | str) -> None:
    flag_names = sorted({k for r in rows for k in r.flags})
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(flag_names + ["detection_auroc", "localization_auroc"])
        for r in rows:
            writer.writerow(
                [int(r.flags.get(f, False)) for f in flag_names]
                + [_fmt(r.detection), _fmt(r.localization)]
            )
