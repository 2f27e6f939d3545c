"""Learnable patch descriptor: a per-location affine map over patch features.

Implemented as a 1x1 convolution so the same transform is applied at every
spatial location. Optionally two normalized coordinate channels are appended
before the convolution, making the map location-aware.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .exceptions import ShapeError


@dataclass
class DescriptorConfig:
    input_dim: int
    output_dim: int
    use_coordinate_channels: bool = False

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ShapeError("descriptor dims must be >= 1")


def coordinate_channels(h: int, w: int, dtype=torch.float32) -> torch.Tensor:
    """(2, h, w) grid of x/y coordinates normalized to [-1, 1]."""
    ys = torch.linspace(-1.0, 1.0, h, dtype=dtype) if h > 1 else torch.zeros(1, dtype=dtype)
    xs = torch.linspace(-1.0, 1.0, w, dtype=dtype) if w > 1 else torch.zeros(1, dtype=dtype)
    gy, gx = torch.meshgrid(ys, xs, indexing="ij")
    return torch.stack([gx, gy], dim=0)


class PatchDescriptor(nn.Module):
    """phi(.) mapping D-channel patch features to D'-channel target features."""

    def __init__(self, config: DescriptorConfig):
        super().__init__()
        self.config = config
        in_ch = config.input_dim + (2 if config.use_coordinate_channels else 0)
        self.proj = nn.Conv2d(in_ch, config.output_dim, kernel_size=1)

    def forward(self, patch_features: torch.Tensor) -> torch.Tensor:
        """(B, D, H, W) -> (B, D', H, W); raises on channel mismatch."""
        if patch_features.shape[1] != self.config.input_dim:
            raise ShapeError(
                f"descriptor expects {self.config.input_dim} channels, "
                f"got {patch_features.shape[1]}"
            )
        x = patch_features
        if self.config.use_coordinate_channels:
            b, _, h, w = x.shape
            coords = coordinate_channels(h, w, dtype=x.dtype).to(x.device)
            x = torch.cat([x, coords.expand(b, -1, -1, -1)], dim=1)
        return self.proj(x)


def describe(patch_map: torch.Tensor, descriptor: PatchDescriptor) -> torch.Tensor:
    """Single-image convenience wrapper: (D, H, W) -> (D', H, W)."""
    return descriptor(patch_map.unsqueeze(0)).squeeze(0)
