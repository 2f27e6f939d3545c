"""Training loop: optimizes descriptor, discriminator, and class anchors
against the combined loss, refreshing the memory bank at every epoch barrier.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import torch

from . import memory_bank
from .config import Config
from .data import AnomalyDataset
from .discriminator import dissimilarity_matrix, kld_loss, repulsive_loss
from .exceptions import CheckpointError, DataError, NumericalFault
from .losses import CfaConfig, LossBreakdown, breakdown, hypersphere_losses
from .model import RdCfaModel

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
LOSS_SCALE_GUARD = 1e6


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 4
    lr: float = 1e-3
    weight_decay: float = 5e-4
    seed: int = 0
    augment_bank: bool = True
    refresh_bank: bool = True
    use_dissimilarity: bool = True
    val_fraction: float = 0.1
    cfa: CfaConfig = field(default_factory=CfaConfig)
    backbone_name: str = "tiny"
    backbone_seed: int = 0
    descriptor_output_dim: int | None = None
    latent_dim: int = 4
    use_coordinate_channels: bool = True
    image_size: int = 64

    def __post_init__(self):
        if self.epochs < 1:
            raise DataError("epochs must be >= 1")
        if self.use_dissimilarity and self.batch_size < 2:
            raise DataError("dissimilarity weighting needs batch_size >= 2")

    @classmethod
    def from_config(cls, cfg: Config, seed: int | None = None) -> "TrainConfig":
        input_dim = _backbone_width(cfg["backbone.name"])
        output_dim = cfg["descriptor.output_dim"] or input_dim
        r_sq = cfg["cfa.r_sq"]
        if r_sq <= 0:
            r_sq = CfaConfig.scaled_radius(output_dim)
        alpha = cfg["cfa.alpha"]
        if alpha < 0:
            alpha = 0.1 * r_sq
        return cls(
            epochs=cfg["train.epochs"],
            batch_size=cfg["train.batch_size"],
            lr=cfg["train.lr"],
            weight_decay=cfg["train.weight_decay"],
            seed=cfg["train.seed"] if seed is None else seed,
            augment_bank=cfg["train.augment_bank"],
            refresh_bank=cfg["train.refresh_bank"],
            use_dissimilarity=cfg["train.use_dissimilarity"],
            val_fraction=cfg["train.val_fraction"],
            cfa=CfaConfig(
                k=cfg["cfa.k"],
                j=cfg["cfa.j"],
                r_sq=r_sq,
                alpha=alpha,
                alpha_kl=cfg["cfa.alpha_kl"],
                alpha_dr=cfg["cfa.alpha_dr"],
                rho=cfg["cfa.rho"],
            ),
            backbone_name=cfg["backbone.name"],
            backbone_seed=cfg["backbone.seed"],
            descriptor_output_dim=cfg["descriptor.output_dim"] or None,
            latent_dim=cfg["disc.latent_dim"],
            use_coordinate_channels=cfg["descriptor.coords"],
            image_size=cfg["data.image_size"],
        )


@dataclass
class TrainReport:
    epoch_means: list[LossBreakdown]
    batch_breakdowns: list[list[LossBreakdown]]
    wall_clock_seconds: float
    final_epoch_stamp: int


def _backbone_width(name: str) -> int:
    if name == "tiny":
        return 8 + 16 + 32
    if name in ("wide_resnet50", "wideresnet50"):
        return 256 + 512 + 1024
    raise DataError(f"unknown backbone {name!r}")


def _check_components(parts: dict[str, torch.Tensor]) -> None:
    for name, value in parts.items():
        v = float(value.detach())
        if not np.isfinite(v):
            raise NumericalFault(f"loss component {name!r} is non-finite")
        if v > LOSS_SCALE_GUARD:
            raise NumericalFault(
                f"loss component {name!r} = {v:.3e} exceeds the divergence guard"
            )


def build_model(config: TrainConfig, n_classes: int) -> RdCfaModel:
    return RdCfaModel.build(
        backbone_name=config.backbone_name,
        n_classes=n_classes,
        descriptor_output_dim=config.descriptor_output_dim,
        latent_dim=config.latent_dim,
        rho=config.cfa.rho,
        augment_bank=config.augment_bank,
        use_coordinate_channels=config.use_coordinate_channels,
        backbone_seed=config.backbone_seed,
        init_seed=config.seed,
    )


def train_epoch(
    model: RdCfaModel,
    bank: memory_bank.MemoryBank,
    batches,
    config: TrainConfig,
    optimizer: torch.optim.Optimizer,
    cfa: CfaConfig,
) -> list[LossBreakdown]:
    """One pass over the batch iterator; returns per-batch breakdowns.

    Each batch is (patch_features (B, D, H, W), labels (B,)).
    """
    records: list[LossBreakdown] = []
    for patch, labels in batches:
        if config.use_dissimilarity and patch.shape[0] < 2:
            log.warning("skipping single-sample batch (dissimilarity needs pairs)")
            continue
        phi, mu, log_var = model(patch)
        queries = model.query_features(phi, mu, log_var)
        flat = queries.permute(0, 2, 3, 1).reshape(-1, queries.shape[1])
        f_att, f_rep = hypersphere_losses(flat, bank, cfa)
        kld = kld_loss(mu, log_var, labels, model.class_means)
        if config.use_dissimilarity:
            dm = dissimilarity_matrix(mu.detach())
        else:
            dm = torch.ones(patch.shape[0], patch.shape[0], dtype=mu.dtype)
        d_rep = repulsive_loss(model.class_means, labels, dm, cfa.rho)
        _check_components(
            {"f_att": f_att, "f_rep": f_rep, "kld": kld, "d_rep": d_rep}
        )
        record = breakdown(f_att, f_rep, kld, d_rep, cfa.alpha_kl, cfa.alpha_dr)
        total = (
            cfa.alpha_kl * kld + cfa.alpha_dr * d_rep + f_att + f_rep
        )
        optimizer.zero_grad()
        total.backward()
        optimizer.step()
        records.append(record)
    return records


def _epoch_mean(records: list[LossBreakdown]) -> LossBreakdown:
    def mean(attr):
        return float(np.mean([getattr(r, attr) for r in records]))

    return LossBreakdown(
        f_att=mean("f_att"),
        f_rep=mean("f_rep"),
        kld=mean("kld"),
        d_rep=mean("d_rep"),
        total=mean("total"),
    )


def train(
    config: TrainConfig, dataset: AnomalyDataset
) -> tuple[RdCfaModel, memory_bank.MemoryBank, TrainReport]:
    """Full training run: bank init, epoch loop, per-epoch bank refresh."""
    start = time.monotonic()
    torch.manual_seed(config.seed)
    model = build_model(config, dataset.n_classes)
    cfa = config.cfa

    backbone_hash = model.backbone_hash()

    # frozen backbone: extract each sample's patch features exactly once
    cached: list[tuple[torch.Tensor, int]] = []
    for sample in dataset.train_samples:
        feats = model.patch_features(dataset.load_image(sample).unsqueeze(0))
        cached.append((feats.squeeze(0), sample.label))
    if not cached:
        raise DataError("training set is empty")

    bank = memory_bank.initialize(dataset, model)

    optimizer = torch.optim.AdamW(
        model.trainable_parameters(), lr=config.lr, weight_decay=config.weight_decay
    )
    rng = np.random.default_rng(config.seed)
    epoch_means: list[LossBreakdown] = []
    batch_logs: list[list[LossBreakdown]] = []
    for _epoch in range(config.epochs):
        order = rng.permutation(len(cached))
        batches = []
        for i in range(0, len(order), config.batch_size):
            idx = order[i : i + config.batch_size]
            patch = torch.stack([cached[t][0] for t in idx])
            labels = torch.tensor([cached[t][1] for t in idx], dtype=torch.long)
            batches.append((patch, labels))
        records = train_epoch(model, bank, batches, config, optimizer, cfa)
        if not records:
            raise DataError("epoch produced no usable batches")
        epoch_means.append(_epoch_mean(records))
        batch_logs.append(records)
        if config.refresh_bank:
            bank = memory_bank.refresh(bank, dataset, model)

    if model.backbone_hash() != backbone_hash:
        raise NumericalFault("backbone weights changed during training")

    report = TrainReport(
        epoch_means=epoch_means,
        batch_breakdowns=batch_logs,
        wall_clock_seconds=time.monotonic() - start,
        final_epoch_stamp=bank.epoch_stamp,
    )
    return model, bank, report


def derived_seeds(base_seed: int, n_runs: int) -> list[int]:
    """Deterministic per-run seeds for the repeated-run harness."""
    return [base_seed + 1000 * i for i in range(n_runs)]


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(
    path: Path | str,
    model: RdCfaModel,
    bank: memory_bank.MemoryBank,
    config: TrainConfig,
    class_names: list[str],
    extra: dict[str, Any] | None = None,
) -> None:
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "descriptor": model.descriptor.state_dict(),
        "discriminator": model.discriminator.state_dict(),
        "class_means": model.class_means.state_dict(),
        "bank_entries": bank.entries,
        "bank_augmented": bank.augmented,
        "bank_epoch_stamp": bank.epoch_stamp,
        "class_names": class_names,
        "config": _config_dict(config),
        "extra": extra or {},
    }
    torch.save(payload, path)


def _config_dict(config: TrainConfig) -> dict[str, Any]:
    cfa = config.cfa
    return {
        "epochs": config.epochs,
        "batch_size": config.batch_size,
        "lr": config.lr,
        "weight_decay": config.weight_decay,
        "seed": config.seed,
        "augment_bank": config.augment_bank,
        "refresh_bank": config.refresh_bank,
        "use_dissimilarity": config.use_dissimilarity,
        "val_fraction": config.val_fraction,
        "backbone_name": config.backbone_name,
        "backbone_seed": config.backbone_seed,
        "descriptor_output_dim": config.descriptor_output_dim,
        "latent_dim": config.latent_dim,
        "use_coordinate_channels": config.use_coordinate_channels,
        "image_size": config.image_size,
        "cfa": {
            "k": cfa.k,
            "j": cfa.j,
            "r_sq": cfa.r_sq,
            "alpha": cfa.alpha,
            "alpha_kl": cfa.alpha_kl,
            "alpha_dr": cfa.alpha_dr,
            "rho": cfa.rho,
        },
    }


def _config_from_dict(d: dict[str, Any]) -> TrainConfig:
    cfa = CfaConfig(**d["cfa"])
    rest = {k: v for k, v in d.items() if k != "cfa"}
    return TrainConfig(cfa=cfa, **rest)


def load_checkpoint(
    path: Path | str,
) -> tuple[RdCfaModel, memory_bank.MemoryBank, TrainConfig, list[str]]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint {path} not found")
    payload = torch.load(path, weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version} != supported "
            f"{CHECKPOINT_FORMAT_VERSION}"
        )
    config = _config_from_dict(payload["config"])
    class_names = payload["class_names"]
    model = build_model(config, len(class_names))
    model.descriptor.load_state_dict(payload["descriptor"])
    model.discriminator.load_state_dict(payload["discriminator"])
    model.class_means.load_state_dict(payload["class_means"])
    bank = memory_bank.MemoryBank(
        entries=payload["bank_entries"],
        augmented=payload["bank_augmented"],
        epoch_stamp=payload["bank_epoch_stamp"],
    )
    if bank.entry_width != model.bank_width:
        raise CheckpointError(
            f"bank width {bank.entry_width} incompatible with model width "
            f"{model.bank_width}"
        )
    return model, bank, config, class_names
