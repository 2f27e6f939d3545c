import pytest
import torch

from rdcfa.data import SyntheticSpec, generate_synthetic, load_dataset
from rdcfa.losses import CfaConfig
from rdcfa.trainer import TrainConfig, train


def tiny_train_config(seed: int = 0, **overrides) -> TrainConfig:
    defaults = dict(
        epochs=5,
        batch_size=6,
        seed=seed,
        latent_dim=4,
        descriptor_output_dim=16,
        cfa=CfaConfig(r_sq=CfaConfig.scaled_radius(16)),
        backbone_name="tiny",
        image_size=64,
    )
    defaults.update(overrides)
    return TrainConfig(**defaults)


@pytest.fixture(scope="session")
def synthetic_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("synthetic") / "dataset"
    generate_synthetic(SyntheticSpec(seed=0), root)
    return root


@pytest.fixture(scope="session")
def dataset(synthetic_root):
    return load_dataset(synthetic_root, image_size=64)


@pytest.fixture(scope="session")
def trained(dataset):
    """One trained tiny model shared by scorer/evaluator/trainer tests."""
    torch.manual_seed(0)
    model, bank, report = train(tiny_train_config(), dataset)
    return model, bank, report
