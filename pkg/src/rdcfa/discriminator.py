"""Regularized discriminator head and its losses.

The discriminator predicts a diagonal Gaussian (mean, log-variance) for every
adapted patch feature. Learnable per-class means anchor the Gaussians; a
supervised divergence loss pulls each patch's Gaussian toward its class
anchor, and a repulsive loss pushes the anchors of different classes apart,
weighted by a per-batch dissimilarity matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .exceptions import ShapeError

DEGENERATE_RANGE_TOL = 1e-12


@dataclass
class GaussianField:
    """Per-patch diagonal Gaussian parameters of one image."""

    mu: torch.Tensor  # (m, H, W)
    log_var: torch.Tensor  # (m, H, W)

    def __post_init__(self):
        if self.mu.shape != self.log_var.shape:
            raise ShapeError("mu and log_var shapes must match")

    @property
    def latent_dim(self) -> int:
        return self.mu.shape[0]


class Discriminator(nn.Module):
    """Two per-location affine heads: adapted features -> (mu, log_var)."""

    def __init__(self, input_dim: int, latent_dim: int):
        super().__init__()
        self.input_dim = input_dim
        self.latent_dim = latent_dim
        self.mu_head = nn.Conv2d(input_dim, latent_dim, kernel_size=1)
        self.log_var_head = nn.Conv2d(input_dim, latent_dim, kernel_size=1)

    def forward(self, target_features: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """(B, D', H, W) -> mu, log_var each (B, m, H, W)."""
        if target_features.shape[1] != self.input_dim:
            raise ShapeError(
                f"discriminator expects {self.input_dim} channels, "
                f"got {target_features.shape[1]}"
            )
        return self.mu_head(target_features), self.log_var_head(target_features)


class ClassMeans(nn.Module):
    """Learnable Gaussian anchor per class, initialized at scale sqrt(rho)/2."""

    def __init__(self, n_classes: int, latent_dim: int, rho: float, seed: int = 0):
        super().__init__()
        if n_classes < 1:
            raise ShapeError("need at least one class")
        gen = torch.Generator().manual_seed(seed)
        init = torch.randn(n_classes, latent_dim, generator=gen) * (rho**0.5 / 2)
        self.means = nn.Parameter(init)

    @property
    def n_classes(self) -> int:
        return self.means.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.means.shape[1]


def kld_loss(
    mu: torch.Tensor,
    log_var: torch.Tensor,
    labels: torch.Tensor,
    class_means: ClassMeans,
) -> torch.Tensor:
    """Supervised divergence toward the labelled class anchor.

    Per patch: ||mu - mu_label||^2 + tr(Sigma) - log det(Sigma) - m with
    diagonal Sigma = exp(log_var); averaged over patches and batch. Zero
    exactly when mu equals the anchor and Sigma is the identity everywhere.

    mu, log_var: (B, m, H, W); labels: (B,) int class indices.
    """
    if labels.min() < 0 or labels.max() >= class_means.n_classes:
        raise ShapeError("class label out of range")
    m = mu.shape[1]
    anchors = class_means.means[labels]  # (B, m)
    diff = mu - anchors[:, :, None, None]
    sq = (diff**2).sum(dim=1)  # (B, H, W)
    trace = log_var.exp().sum(dim=1)
    log_det = log_var.sum(dim=1)
    per_patch = sq + trace - log_det - m
    return per_patch.mean()


def dissimilarity_matrix(mu_batch: torch.Tensor) -> torch.Tensor:
    """Min-max-scaled mean pairwise patch-mean distances between samples.

    mu_batch: (N, m, H, W) per-patch means of N samples. Returns a detached
    symmetric (N, N) matrix in [0, 1]. The mean over all cross-sample patch
    pairs of squared Euclidean distances reduces in closed form to
    mean|a|^2 + mean|b|^2 - 2 <mean a, mean b>. When the pre-scaling range is
    degenerate (all entries equal within tolerance) the matrix falls back to
    all-ones, recovering unweighted repulsion.
    """
    if mu_batch.dim() != 4 or mu_batch.shape[0] < 2:
        raise ShapeError("dissimilarity matrix needs >= 2 samples of (m, H, W) means")
    with torch.no_grad():
        n = mu_batch.shape[0]
        flat = mu_batch.reshape(n, mu_batch.shape[1], -1).transpose(1, 2)  # (N, T, m)
        mean_sq = (flat**2).sum(dim=2).mean(dim=1)  # (N,)
        mean_vec = flat.mean(dim=1)  # (N, m)
        m_mat = mean_sq[:, None] + mean_sq[None, :] - 2 * mean_vec @ mean_vec.T
        m_mat = m_mat.clamp_min(0)
        lo, hi = m_mat.min(), m_mat.max()
        if (hi - lo).abs() <= DEGENERATE_RANGE_TOL:
            return torch.ones_like(m_mat)
        dm = (m_mat - lo) / (hi - lo)
        # enforce exact symmetry against floating-point asymmetry
        return (dm + dm.T) / 2


def repulsive_loss(
    class_means: ClassMeans,
    labels: torch.Tensor,
    dm: torch.Tensor,
    rho: float,
) -> torch.Tensor:
    """Hinge pushing anchors of differently-labelled samples at least
    sqrt(rho) apart, weighted per ordered sample pair by the dissimilarity
    matrix:

        (1/rho) * sum_{i != j, l_i != l_j} max(0, DM_ij * (rho - |mu_li - mu_lj|^2))^2

    Same-class pairs are skipped: their anchor difference is identically
    zero, so they contribute a constant with zero gradient.
    """
    if rho <= 0:
        raise ShapeError("rho must be positive")
    if dm.shape[0] != labels.shape[0] or dm.shape[0] != dm.shape[1]:
        raise ShapeError("dissimilarity matrix must be square over the batch")
    anchors = class_means.means[labels]  # (N, m)
    sq_dist = ((anchors[:, None, :] - anchors[None, :, :]) ** 2).sum(dim=-1)  # (N, N)
    hinge = torch.clamp(dm * (rho - sq_dist), min=0) ** 2
    cross = labels[:, None] != labels[None, :]
    return hinge[cross].sum() / rho
