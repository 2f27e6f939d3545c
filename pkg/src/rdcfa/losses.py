"""Coupled-hypersphere attraction/repulsion losses and the combined total.

Attraction penalizes a query's squared distance to each of its K nearest
memorized features beyond the hypersphere radius; repulsion pushes queries
out of the spheres of the next J neighbors (hard negatives). Both use one
shared neighbor ranking per query.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .exceptions import ShapeError
from .memory_bank import MemoryBank, neighbor_distances


@dataclass
class CfaConfig:
    """Hyperparameters of the hypersphere losses and loss mixing weights."""

    k: int = 3  # attraction neighbors
    j: int = 3  # hard negatives
    r_sq: float = 1e-3  # squared hypersphere radius
    alpha: float = 1e-4  # repulsion margin
    alpha_kl: float = 0.5
    alpha_dr: float = 0.1
    rho: float = 10.0

    def __post_init__(self):
        if self.k < 1 or self.j < 1:
            raise ShapeError("k and j must be >= 1")
        if self.r_sq <= 0:
            raise ShapeError("r_sq must be positive")
        if self.alpha < 0:
            raise ShapeError("alpha must be non-negative")
        if self.alpha_kl < 0 or self.alpha_dr < 0:
            raise ShapeError("alpha_kl and alpha_dr must be non-negative")
        if self.rho <= 0:
            raise ShapeError("rho must be positive")

    @staticmethod
    def scaled_radius(output_dim: int) -> float:
        """Default squared radius, scaled with descriptor width."""
        return 1e-5 * output_dim


@dataclass
class LossBreakdown:
    f_att: float
    f_rep: float
    kld: float
    d_rep: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return {
            "f_att": self.f_att,
            "f_rep": self.f_rep,
            "kld": self.kld,
            "d_rep": self.d_rep,
            "total": self.total,
        }


def attract_loss(
    targets: torch.Tensor, bank: MemoryBank, k: int, r_sq: float
) -> torch.Tensor:
    """(1/(T*K)) * sum over queries and ranks 1..K of
    max(0, dist^2 - r^2)."""
    if k > bank.size:
        raise ShapeError(f"k={k} exceeds bank size {bank.size}")
    dist = neighbor_distances(targets, bank, k)
    return torch.clamp(dist - r_sq, min=0).mean()


def repel_loss(
    targets: torch.Tensor,
    bank: MemoryBank,
    k: int,
    j: int,
    r_sq: float,
    alpha: float,
) -> torch.Tensor:
    """(1/(T*J)) * sum over queries and ranks K+1..K+J of
    max(0, r^2 - dist^2 - alpha)."""
    if k + j > bank.size:
        raise ShapeError(f"k+j={k + j} exceeds bank size {bank.size}")
    dist = neighbor_distances(targets, bank, k + j)[:, k:]
    return torch.clamp(r_sq - dist - alpha, min=0).mean()


def hypersphere_losses(
    targets: torch.Tensor, bank: MemoryBank, config: CfaConfig
) -> tuple[torch.Tensor, torch.Tensor]:
    """Attraction and repulsion from one shared nearest(k+j) ranking."""
    if config.k + config.j > bank.size:
        raise ShapeError(
            f"k+j={config.k + config.j} exceeds bank size {bank.size}"
        )
    dist = neighbor_distances(targets, bank, config.k + config.j)
    att = torch.clamp(dist[:, : config.k] - config.r_sq, min=0).mean()
    rep = torch.clamp(
        config.r_sq - dist[:, config.k :] - config.alpha, min=0
    ).mean()
    return att, rep


def total_loss(
    f_att: torch.Tensor,
    f_rep: torch.Tensor,
    kld: torch.Tensor,
    d_rep: torch.Tensor,
    alpha_kl: float,
    alpha_dr: float,
) -> torch.Tensor:
    """alpha_kl * kld + alpha_dr * d_rep + f_att + f_rep.

    With both weights zero this reduces to the plain hypersphere sum."""
    return alpha_kl * kld + alpha_dr * d_rep + f_att + f_rep


def breakdown(
    f_att: torch.Tensor,
    f_rep: torch.Tensor,
    kld: torch.Tensor,
    d_rep: torch.Tensor,
    alpha_kl: float,
    alpha_dr: float,
) -> LossBreakdown:
    tot = total_loss(f_att, f_rep, kld, d_rep, alpha_kl, alpha_dr)

    def scalar(x):
        return float(x.detach()) if torch.is_tensor(x) else float(x)

    return LossBreakdown(
        f_att=scalar(f_att),
        f_rep=scalar(f_rep),
        kld=scalar(kld),
        d_rep=scalar(d_rep),
        total=scalar(tot),
    )
