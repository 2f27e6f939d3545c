"""Multi-class anomaly detection and localization.

One model is trained on normal samples from many classes and scores
per-pixel and per-image abnormality at inference without class labels:
frozen multiscale CNN features are adapted by a learnable patch descriptor,
regularized by a discriminative Gaussian head with repelled per-class
anchors, and compared against a per-class memory bank of normal features.
"""

from .backbone import (
    FeatureMapSet,
    PatchFeatureMap,
    TinyBackbone,
    assemble_patch_features,
    extract_multiscale,
    make_backbone,
)
from .config import Config
from .data import AnomalyDataset, Sample, SyntheticSpec, generate_synthetic, load_dataset
from .descriptor import DescriptorConfig, PatchDescriptor
from .discriminator import (
    ClassMeans,
    Discriminator,
    GaussianField,
    dissimilarity_matrix,
    kld_loss,
    repulsive_loss,
)
from .evaluator import ReportTable, ablation_table, auroc, evaluate, evaluate_runs
from .losses import CfaConfig, LossBreakdown, attract_loss, repel_loss, total_loss
from .memory_bank import MemoryBank, augment_feature, initialize, nearest, refresh
from .model import RdCfaModel
from .scorer import AnomalyMap, postprocess, raw_score_map, score_image
from .trainer import TrainConfig, TrainReport, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "AnomalyDataset",
    "AnomalyMap",
    "CfaConfig",
    "ClassMeans",
    "Config",
    "DescriptorConfig",
    "Discriminator",
    "FeatureMapSet",
    "GaussianField",
    "LossBreakdown",
    "MemoryBank",
    "PatchDescriptor",
    "PatchFeatureMap",
    "RdCfaModel",
    "ReportTable",
    "Sample",
    "SyntheticSpec",
    "TinyBackbone",
    "TrainConfig",
    "TrainReport",
    "ablation_table",
    "assemble_patch_features",
    "attract_loss",
    "augment_feature",
    "auroc",
    "dissimilarity_matrix",
    "evaluate",
    "evaluate_runs",
    "extract_multiscale",
    "generate_synthetic",
    "initialize",
    "kld_loss",
    "load_checkpoint",
    "load_dataset",
    "make_backbone",
    "nearest",
    "postprocess",
    "raw_score_map",
    "refresh",
    "repel_loss",
    "repulsive_loss",
    "save_checkpoint",
    "score_image",
    "total_loss",
    "train",
]
