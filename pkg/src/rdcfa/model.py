"""The full model: frozen backbone, patch descriptor, discriminator, anchors."""

from __future__ import annotations

import hashlib

import torch
from torch import nn

from . import memory_bank
from .backbone import extract_patch_features_batch, make_backbone
from .descriptor import DescriptorConfig, PatchDescriptor
from .discriminator import ClassMeans, Discriminator


class RdCfaModel(nn.Module):
    """Bundles the frozen feature extractor with all trainable parts.

    Only the descriptor, discriminator heads, and class anchors train;
    the backbone stays frozen and its weights are hash-checked for that.
    """

    def __init__(
        self,
        backbone: nn.Module,
        descriptor: PatchDescriptor,
        discriminator: Discriminator,
        class_means: ClassMeans,
        augment_bank: bool = True,
    ):
        super().__init__()
        self.backbone = backbone
        self.descriptor = descriptor
        self.discriminator = discriminator
        self.class_means = class_means
        self.augment_bank = augment_bank

    @classmethod
    def build(
        cls,
        backbone_name: str,
        n_classes: int,
        descriptor_output_dim: int | None = None,
        latent_dim: int = 4,
        rho: float = 10.0,
        augment_bank: bool = True,
        use_coordinate_channels: bool = False,
        backbone_seed: int = 0,
        init_seed: int = 0,
    ) -> "RdCfaModel":
        backbone = make_backbone(backbone_name, seed=backbone_seed)
        input_dim = sum(backbone.channels)
        output_dim = descriptor_output_dim or input_dim
        torch.manual_seed(init_seed)
        descriptor = PatchDescriptor(
            DescriptorConfig(
                input_dim=input_dim,
                output_dim=output_dim,
                use_coordinate_channels=use_coordinate_channels,
            )
        )
        discriminator = Discriminator(output_dim, latent_dim)
        class_means = ClassMeans(n_classes, latent_dim, rho=rho, seed=init_seed)
        return cls(backbone, descriptor, discriminator, class_means, augment_bank)

    @property
    def bank_width(self) -> int:
        d_out = self.descriptor.config.output_dim
        if self.augment_bank:
            return d_out + 2 * self.discriminator.latent_dim
        return d_out

    def trainable_parameters(self):
        yield from self.descriptor.parameters()
        yield from self.discriminator.parameters()
        yield from self.class_means.parameters()

    def patch_features(self, images: torch.Tensor) -> torch.Tensor:
        """(B, 3, H, W) -> frozen (B, D, H', W'); no gradients."""
        return extract_patch_features_batch(images, self.backbone)

    def forward(
        self, patch_features: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Patch features -> (phi, mu, log_var), all (B, *, H, W)."""
        phi = self.descriptor(patch_features)
        mu, log_var = self.discriminator(phi)
        return phi, mu, log_var

    def query_features(
        self, phi: torch.Tensor, mu: torch.Tensor, log_var: torch.Tensor
    ) -> torch.Tensor:
        """Bank-query maps: augmented channels when the bank is augmented."""
        if self.augment_bank:
            return torch.cat([phi, mu, log_var.exp()], dim=1)
        return phi

    def bank_feature_map(self, image: torch.Tensor) -> torch.Tensor:
        """One image -> (E, H, W) bank-feature map in inference mode."""
        with torch.no_grad():
            patch = self.patch_features(image.unsqueeze(0))
            phi, mu, log_var = self(patch)
            return self.query_features(phi, mu, log_var).squeeze(0)

    def backbone_hash(self) -> str:
        """SHA-256 over the backbone's weight bytes (frozenness check)."""
        digest = hashlib.sha256()
        for name, p in sorted(self.backbone.state_dict().items()):
            digest.update(name.encode())
            digest.update(p.detach().cpu().numpy().tobytes())
        return digest.hexdigest()


__all__ = ["RdCfaModel", "memory_bank"]
