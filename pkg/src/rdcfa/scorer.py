"""Inference-time scoring: min bank distance per patch, upsampling, smoothing.

Scoring never reads class labels; the bank alone defines normality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from scipy.ndimage import gaussian_filter

from .exceptions import ShapeError
from .memory_bank import MemoryBank
from .model import RdCfaModel


@dataclass
class AnomalyMap:
    pixel_scores: np.ndarray  # (H_img, W_img), finite, >= 0
    image_score: float  # max of pixel_scores

    def __post_init__(self):
        if not np.isfinite(self.pixel_scores).all():
            raise ShapeError("pixel scores must be finite")


def raw_score_map(
    image: torch.Tensor, model: RdCfaModel, bank: MemoryBank
) -> np.ndarray:
    """(3, H, W) image -> (H', W') map of squared distances to the rank-1
    bank neighbor of each location's (augmented) feature."""
    feat = model.bank_feature_map(image)  # (E, H', W')
    if feat.shape[0] != bank.entry_width:
        raise ShapeError(
            f"feature width {feat.shape[0]} != bank width {bank.entry_width}"
        )
    h, w = feat.shape[1], feat.shape[2]
    flat = feat.reshape(feat.shape[0], -1).T  # (T, E)
    dist = ((flat[:, None, :] - bank.entries[None, :, :]) ** 2).sum(dim=-1)
    return dist.min(dim=1).values.reshape(h, w).numpy()


def postprocess(
    raw_map: np.ndarray, output_size: tuple[int, int], sigma: float
) -> AnomalyMap:
    """Bilinear upsample to the input resolution, then Gaussian-smooth with a
    unit-sum kernel; sigma=0 skips smoothing. The image score is the max."""
    if sigma < 0:
        raise ShapeError("sigma must be >= 0")
    t = torch.from_numpy(np.ascontiguousarray(raw_map, dtype=np.float64))
    if tuple(raw_map.shape) != tuple(output_size):
        t = F.interpolate(
            t[None, None], size=output_size, mode="bilinear", align_corners=False
        )[0, 0]
    arr = t.numpy()
    if sigma > 0:
        arr = gaussian_filter(arr, sigma=sigma)
    arr = np.clip(arr, 0, None)
    return AnomalyMap(pixel_scores=arr, image_score=float(arr.max()))


def score_image(
    image: torch.Tensor,
    model: RdCfaModel,
    bank: MemoryBank,
    sigma: float = 4.0,
) -> AnomalyMap:
    """Full pipeline for one image at its own resolution."""
    raw = raw_score_map(image, model, bank)
    return postprocess(raw, (image.shape[-2], image.shape[-1]), sigma)
