"""Memorized-feature store with exact nearest-neighbor search.

The bank holds one averaged feature vector per (class, spatial location),
optionally augmented with the discriminator's per-patch Gaussian statistics.
Entries are plain data: they never receive gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .exceptions import DataError, ShapeError


@dataclass
class MemoryBank:
    entries: torch.Tensor  # (B, E)
    augmented: bool
    epoch_stamp: int = 0

    def __post_init__(self):
        if self.entries.dim() != 2 or self.entries.shape[0] < 1:
            raise ShapeError("bank must be a non-empty (B, E) array")
        if not torch.isfinite(self.entries).all():
            raise ShapeError("bank entries must be finite")

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def entry_width(self) -> int:
        return self.entries.shape[1]


@dataclass
class NeighborResult:
    indices: torch.Tensor  # (n,) ascending by distance, ties by lower index
    distances: torch.Tensor  # (n,) squared Euclidean, non-decreasing


def augment_feature(
    target_feature: torch.Tensor,
    mu: torch.Tensor,
    log_var: torch.Tensor,
) -> torch.Tensor:
    """[phi | mu | exp(log_var)] for one patch: widths D' + m + m."""
    return torch.cat([target_feature, mu, log_var.exp()])


def augment_map(
    target_map: torch.Tensor, mu_map: torch.Tensor, log_var_map: torch.Tensor
) -> torch.Tensor:
    """Channel-wise augmentation of whole maps: (D'+2m, H, W)."""
    return torch.cat([target_map, mu_map, log_var_map.exp()], dim=0)


def _class_average_maps(dataset, model) -> list[torch.Tensor]:
    """Per-class, per-location average of bank features over normal samples."""
    sums: dict[int, torch.Tensor] = {}
    counts: dict[int, int] = {}
    with torch.no_grad():
        for sample in dataset.train_samples:
            feat = model.bank_feature_map(dataset.load_image(sample))  # (E, H, W)
            label = sample.label
            if label in sums:
                sums[label] = sums[label] + feat
                counts[label] += 1
            else:
                sums[label] = feat.clone()
                counts[label] = 1
    for label in range(dataset.n_classes):
        if label not in sums:
            raise DataError(
                f"class {dataset.class_names[label]!r} has no normal training samples"
            )
    return [sums[label] / counts[label] for label in range(dataset.n_classes)]


def initialize(dataset, model) -> MemoryBank:
    """Build the bank from the normal training set: B = n_classes * T entries."""
    maps = _class_average_maps(dataset, model)
    entries = torch.cat([m.reshape(m.shape[0], -1).T for m in maps], dim=0)
    return MemoryBank(
        entries=entries.contiguous(), augmented=model.augment_bank, epoch_stamp=0
    )


def refresh(bank: MemoryBank, dataset, model) -> MemoryBank:
    """Recompute the bank with current parameters; bumps the epoch stamp."""
    fresh = initialize(dataset, model)
    if fresh.entry_width != bank.entry_width or fresh.size != bank.size:
        raise ShapeError("refresh changed the bank geometry")
    fresh.epoch_stamp = bank.epoch_stamp + 1
    return fresh


def nearest(bank: MemoryBank, query: torch.Tensor, n: int) -> NeighborResult:
    """Exact top-n squared-Euclidean neighbors, ties broken by lower index."""
    if query.shape[-1] != bank.entry_width:
        raise ShapeError(
            f"query width {query.shape[-1]} != bank width {bank.entry_width}"
        )
    if not 1 <= n <= bank.size:
        raise ShapeError(f"n={n} out of range for bank of size {bank.size}")
    dist = ((bank.entries - query) ** 2).sum(dim=1)
    order = torch.argsort(dist, stable=True)[:n]
    return NeighborResult(indices=order, distances=dist[order])


def neighbor_distances(
    queries: torch.Tensor, bank: MemoryBank, n: int
) -> torch.Tensor:
    """Differentiable (T, n) matrix of each query's n smallest squared
    distances, columns in ascending order. Ranking is done on detached
    distances; gradients flow through the gathered values."""
    if queries.shape[-1] != bank.entry_width:
        raise ShapeError(
            f"query width {queries.shape[-1]} != bank width {bank.entry_width}"
        )
    if not 1 <= n <= bank.size:
        raise ShapeError(f"n={n} out of range for bank of size {bank.size}")
    # expanded form keeps the gradient defined at zero distance
    q_sq = (queries**2).sum(dim=1, keepdim=True)
    b_sq = (bank.entries**2).sum(dim=1)
    dist = (q_sq + b_sq[None, :] - 2 * queries @ bank.entries.T).clamp_min(0)  # (T, B)
    order = torch.argsort(dist.detach(), dim=1, stable=True)[:, :n]
    return dist.gather(1, order)
