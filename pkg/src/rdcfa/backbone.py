"""Frozen convolutional backbones and multiscale patch-feature assembly.

A backbone exposes a list of feature maps at increasing strides; the maps
are bilinearly resized to the largest map's resolution and concatenated
along channels to form the per-image patch-feature tensor.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .exceptions import NumericalFault, ShapeError, SizingError

BACKBONE_CACHE_ENV = "RDCFA_BACKBONE_CACHE"


@dataclass
class FeatureMapSet:
    """Ordered multiscale feature maps of one image, coarsest last."""

    maps: list[torch.Tensor]  # each (C, H, W)
    strides: list[int]

    def __post_init__(self):
        if not self.maps:
            raise ShapeError("FeatureMapSet requires at least one map")
        if len(self.maps) != len(self.strides):
            raise ShapeError("one stride per map required")
        sizes = [(m.shape[-2], m.shape[-1]) for m in self.maps]
        for (h0, w0), (h1, w1) in zip(sizes, sizes[1:]):
            if h1 > h0 or w1 > w0:
                raise ShapeError("map sizes must be non-increasing with level")
        if any(m.shape[0] < 1 for m in self.maps):
            raise ShapeError("every map needs at least one channel")


@dataclass
class PatchFeatureMap:
    """Concatenated multiscale features of one image, one vector per patch."""

    data: torch.Tensor  # (D, H, W)

    @property
    def depth(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def patch_count(self) -> int:
        return self.height * self.width


class TinyBackbone(nn.Module):
    """Small frozen random-convolution backbone for desk-scale runs.

    Three taps at strides 4/8/16 with 8/16/32 channels. Weights are drawn
    from a seeded generator and never trained, so outputs are fully
    deterministic given (seed, input).
    """

    def __init__(self, seed: int = 0, channels: tuple[int, int, int] = (8, 16, 32)):
        super().__init__()
        c1, c2, c3 = channels
        self.stem = nn.Conv2d(3, c1, kernel_size=3, stride=2, padding=1)
        self.block1 = nn.Conv2d(c1, c1, kernel_size=3, stride=2, padding=1)
        self.block2 = nn.Conv2d(c1, c2, kernel_size=3, stride=2, padding=1)
        self.block3 = nn.Conv2d(c2, c3, kernel_size=3, stride=2, padding=1)
        self._strides = [4, 8, 16]
        self._channels = list(channels)

        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for conv in (self.stem, self.block1, self.block2, self.block3):
                fan_in = conv.in_channels * conv.kernel_size[0] * conv.kernel_size[1]
                conv.weight.copy_(
                    torch.randn(conv.weight.shape, generator=gen) / fan_in**0.5
                )
                conv.bias.zero_()
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    @property
    def strides(self) -> list[int]:
        return list(self._strides)

    @property
    def channels(self) -> list[int]:
        return list(self._channels)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        x = torch.relu(self.stem(x))
        t1 = torch.relu(self.block1(x))
        t2 = torch.relu(self.block2(t1))
        t3 = torch.relu(self.block3(t2))
        return [t1, t2, t3]


class WideResnetBackbone(nn.Module):
    """Frozen ImageNet-pretrained Wide-ResNet50 tapped at the three
    intermediate stages with 256/512/1024 channels (strides 4/8/16).

    Weights are downloaded once into the directory named by the
    ``RDCFA_BACKBONE_CACHE`` environment variable (torch hub default
    otherwise). Requires the optional torchvision dependency.
    """

    def __init__(self, pretrained: bool = True):
        super().__init__()
        import torchvision  # deferred: heavyweight optional dependency

        cache = os.environ.get(BACKBONE_CACHE_ENV)
        if cache:
            torch.hub.set_dir(cache)
        weights = "IMAGENET1K_V1" if pretrained else None
        net = torchvision.models.wide_resnet50_2(weights=weights)
        self.stem = nn.Sequential(net.conv1, net.bn1, net.relu, net.maxpool)
        self.layer1 = net.layer1
        self.layer2 = net.layer2
        self.layer3 = net.layer3
        self._strides = [4, 8, 16]
        self._channels = [256, 512, 1024]
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    @property
    def strides(self) -> list[int]:
        return list(self._strides)

    @property
    def channels(self) -> list[int]:
        return list(self._channels)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        x = self.stem(x)
        t1 = self.layer1(x)
        t2 = self.layer2(t1)
        t3 = self.layer3(t2)
        return [t1, t2, t3]


def make_backbone(name: str, seed: int = 0) -> nn.Module:
    if name == "tiny":
        return TinyBackbone(seed=seed)
    if name in ("wide_resnet50", "wideresnet50"):
        return WideResnetBackbone()
    raise ShapeError(f"unknown backbone {name!r}")


def extract_multiscale(image: torch.Tensor, backbone: nn.Module) -> FeatureMapSet:
    """Run the frozen backbone on one 3-channel image.

    The image's spatial size must be divisible by the coarsest stride.
    """
    if image.dim() != 3 or image.shape[0] != 3:
        raise ShapeError(f"expected a (3, H, W) image, got {tuple(image.shape)}")
    max_stride = max(backbone.strides)
    h, w = image.shape[-2:]
    if h % max_stride or w % max_stride:
        raise SizingError(
            f"image size {h}x{w} not divisible by the largest stride {max_stride}"
        )
    with torch.no_grad():
        maps = backbone(image.unsqueeze(0))
    maps = [m.squeeze(0) for m in maps]
    for m in maps:
        if not torch.isfinite(m).all():
            raise NumericalFault("non-finite backbone activations")
    return FeatureMapSet(maps=maps, strides=backbone.strides)


def assemble_patch_features(fms: FeatureMapSet) -> PatchFeatureMap:
    """Resize every map to the finest resolution and concatenate channels."""
    target = fms.maps[0].shape[-2:]
    resized = []
    for m in fms.maps:
        if m.shape[-2:] == tuple(target):
            resized.append(m)
        else:
            resized.append(
                F.interpolate(
                    m.unsqueeze(0), size=target, mode="bilinear", align_corners=False
                ).squeeze(0)
            )
    return PatchFeatureMap(data=torch.cat(resized, dim=0))


def extract_patch_features_batch(
    images: torch.Tensor, backbone: nn.Module
) -> torch.Tensor:
    """Batched backbone + assembly: (B, 3, H, W) -> (B, D, H', W')."""
    max_stride = max(backbone.strides)
    h, w = images.shape[-2:]
    if h % max_stride or w % max_stride:
        raise SizingError(
            f"image size {h}x{w} not divisible by the largest stride {max_stride}"
        )
    with torch.no_grad():
        maps = backbone(images)
    target = maps[0].shape[-2:]
    resized = [
        m
        if m.shape[-2:] == tuple(target)
        else F.interpolate(m, size=target, mode="bilinear", align_corners=False)
        for m in maps
    ]
    out = torch.cat(resized, dim=1)
    if not torch.isfinite(out).all():
        raise NumericalFault("non-finite backbone activations")
    return out
