"""Command-line entry point: train, evaluate, score, synth, ablate.

Every command writes a run manifest (resolved config, seeds, command line,
timestamps, artifact paths) before doing any work, so a run is reproducible
from its manifest alone.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
from PIL import Image

from .config import Config, describe_defaults
from .data import SyntheticSpec, generate_synthetic, load_dataset, load_image
from .evaluator import ablation_csv, ablation_table, evaluate_runs
from .exceptions import (
    CheckpointError,
    ConfigError,
    DataError,
    NumericalFault,
    RdCfaError,
)
from .scorer import score_image
from .trainer import TrainConfig, load_checkpoint, save_checkpoint, train

EXIT_OK = 0
EXIT_GENERIC = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_CHECKPOINT = 4
EXIT_NUMERICAL = 5

OUTPUT_ROOT_ENV = "RDCFA_OUTPUT_ROOT"

HYPER_GRID = {
    "cfa.rho": [5.0, 10.0, 20.0, 50.0],
    "cfa.alpha_kl": [0.1, 0.25, 0.5, 0.75, 1.0],
    "cfa.alpha_dr": [0.1, 0.25, 0.5, 0.75, 1.0],
}


def _out_dir(args) -> Path:
    root = Path(args.out or os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    root.mkdir(parents=True, exist_ok=True)
    return root


def _write_manifest(out: Path, command: str, cfg: Config, seeds: list[int], artifacts: list[str]) -> None:
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "config": cfg.snapshot(),
        "seeds": seeds,
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "artifacts": artifacts,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def cmd_train(args) -> int:
    cfg = Config.load(args.config, args.override)
    out = _out_dir(args)
    tc = TrainConfig.from_config(cfg, seed=args.seed)
    _write_manifest(out, "train", cfg, [tc.seed], ["checkpoint.pt", "report.json"])
    dataset = load_dataset(cfg["data.root"], image_size=cfg["data.image_size"])
    model, bank, report = train(tc, dataset)
    save_checkpoint(out / "checkpoint.pt", model, bank, tc, dataset.class_names)
    (out / "report.json").write_text(
        json.dumps(
            {
                "epoch_means": [e.as_dict() for e in report.epoch_means],
                "wall_clock_seconds": report.wall_clock_seconds,
                "final_epoch_stamp": report.final_epoch_stamp,
            },
            indent=2,
        )
        + "\n"
    )
    print(f"checkpoint written to {out / 'checkpoint.pt'}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = Config.load(args.config, args.override)
    out = _out_dir(args)
    _write_manifest(out, "evaluate", cfg, [], ["report.csv", "report.txt"])
    model, bank, tc, _class_names = load_checkpoint(args.checkpoint)
    root = args.data or cfg["data.root"]
    dataset = load_dataset(root, image_size=tc.image_size)
    from .evaluator import evaluate

    table = evaluate(model, bank, dataset, sigma=cfg["score.sigma"])
    table.to_csv(out / "report.csv")
    text = table.to_text()
    (out / "report.txt").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_score(args) -> int:
    cfg = Config.load(args.config, args.override)
    out = _out_dir(args)
    _write_manifest(out, "score", cfg, [], ["scores.txt"])
    model, bank, tc, _ = load_checkpoint(args.checkpoint)
    sigma = cfg["score.sigma"]
    threshold = cfg["score.threshold"]
    records = []
    for path in args.images:
        path = Path(path)
        if not path.exists():
            raise DataError(f"image {path} not found")
        image = load_image(path, tc.image_size)
        amap = score_image(image, model, bank, sigma=sigma)
        peak = amap.pixel_scores.max()
        norm = amap.pixel_scores / peak if peak > 0 else amap.pixel_scores
        png16 = (norm * 65535).astype(np.uint16)
        Image.fromarray(png16).save(out / f"{path.stem}_score.png")
        if args.emit_mask:
            mask = (norm >= threshold).astype(np.uint8) * 255
            Image.fromarray(mask).save(out / f"{path.stem}_mask.png")
        records.append(f"{path}\t{amap.image_score:.6f}")
    (out / "scores.txt").write_text("\n".join(records) + "\n")
    print("\n".join(records))
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = Config.load(args.config, args.override)
    out = _out_dir(args)
    spec = SyntheticSpec(
        n_classes=args.n_classes,
        image_size=args.image_size,
        train_per_class=args.train_per_class,
        test_per_class=args.test_per_class,
        seed=args.seed if args.seed is not None else 0,
    )
    _write_manifest(out, "synth", cfg, [spec.seed], ["dataset/"])
    generate_synthetic(spec, out / "dataset")
    print(f"synthetic dataset written to {out / 'dataset'}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = Config.load(args.config, args.override)
    out = _out_dir(args)
    tc = TrainConfig.from_config(cfg)
    dataset = load_dataset(cfg["data.root"], image_size=cfg["data.image_size"])
    n_runs = args.runs or cfg["train.runs"]
    artifacts = []
    if args.grid in ("flags", "all"):
        artifacts.append("ablation_flags.csv")
    if args.grid in ("dissimilarity", "all"):
        artifacts.append("ablation_dissimilarity.csv")
    if args.grid in ("hyper", "all"):
        artifacts.append("ablation_hyper.csv")
    _write_manifest(out, "ablate", cfg, [tc.seed], artifacts)

    if args.grid in ("flags", "all"):
        rows = ablation_table(dataset, tc, grid="flags", n_runs=n_runs, sigma=cfg["score.sigma"])
        ablation_csv(rows, out / "ablation_flags.csv")
    if args.grid in ("dissimilarity", "all"):
        rows = ablation_table(dataset, tc, grid="dissimilarity", n_runs=n_runs, sigma=cfg["score.sigma"])
        ablation_csv(rows, out / "ablation_dissimilarity.csv")
    if args.grid in ("hyper", "all"):
        _hyper_grid_csv(tc, dataset, n_runs, cfg["score.sigma"], out / "ablation_hyper.csv")
    print(f"ablation tables written to {out}")
    return EXIT_OK


def _hyper_grid_csv(tc, dataset, n_runs, sigma, path: Path) -> None:
    import csv as _csv

    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["rho", "alpha_kl", "alpha_dr", "detection_auroc", "localization_auroc"])
        for rho in HYPER_GRID["cfa.rho"]:
            for akl in HYPER_GRID["cfa.alpha_kl"]:
                for adr in HYPER_GRID["cfa.alpha_dr"]:
                    cfa = replace(tc.cfa, rho=rho, alpha_kl=akl, alpha_dr=adr)
                    table = evaluate_runs(replace(tc, cfa=cfa), dataset, n_runs, sigma=sigma)
                    total = table.averages[-1]
                    writer.writerow(
                        [rho, akl, adr,
                         f"{total.detection:.6f}" if total.detection is not None else "",
                         f"{total.localization:.6f}" if total.localization is not None else ""]
                    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rdcfa",
        description="Multi-class anomaly detection: train, evaluate, score, synth, ablate.",
        epilog="Config keys and defaults:\n" + describe_defaults(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="config file (key = value lines)")
        p.add_argument(
            "--override", "-o", action="append", default=[], metavar="KEY=VALUE",
            help="config override; precedence: flags > file > defaults",
        )
        p.add_argument("--out", default=None, help="output directory (default $RDCFA_OUTPUT_ROOT or ./runs)")

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    common(p)
    p.add_argument("--seed", type=int, default=None, help="override train.seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="per-class AUROC report for a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", default=None, help="dataset root (default data.root)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("score", help="emit score maps for images")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--emit-mask", action="store_true", help="also write binarized masks")
    p.add_argument("images", nargs="+")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--n-classes", type=int, default=3)
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--train-per-class", type=int, default=20)
    p.add_argument("--test-per-class", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ablate", help="flag-grid and hyperparameter-grid tables")
    common(p)
    p.add_argument("--grid", choices=["flags", "dissimilarity", "hyper", "all"], default="flags")
    p.add_argument("--runs", type=int, default=None, help="override train.runs")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except NumericalFault as exc:
        print(f"numerical fault: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except RdCfaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GENERIC


if __name__ == "__main__":
    sys.exit(main())
