"""
Pytest Configuration and Fixtures
Shared fixtures: tiny model configs, synthetic corpora on disk, feature stores
"""

import numpy as np
import pytest

from fcmf.config import settings
from fcmf.schemas.config import AblationFlags, ModelConfig, SynthConfig, TrainConfig
from fcmf.services.dataset_service import FeatureStore
from fcmf.services.synthetic_service import generate_synthetic
from tests.fixtures import SYNTH_SAMPLES, SYNTH_SEED, TINY_FEATURE_DIM, TINY_GRID_CELLS


def pytest_collection_modifyitems(config, items):
    """Skip acceptance-scale tests unless FCMF_RUN_SLOW=1"""
    if settings.FCMF_RUN_SLOW:
        return
    skip_slow = pytest.mark.skip(reason="acceptance-scale run; set FCMF_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    """Fresh generator per test"""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_model_config():
    """d=8, one layer, two heads, tiny visual shapes, dropout off"""
    return ModelConfig(
        hidden_size=8,
        num_layers=1,
        heads=2,
        geometry_dim=8,
        feature_dim=TINY_FEATURE_DIM,
        grid_cells=TINY_GRID_CELLS,
        max_len=24,
        k_max=3,
        j_max=2,
        dropout=0.0,
    )


@pytest.fixture
def tiny_train_config(tiny_model_config, synthetic_dir):
    return TrainConfig(
        data=str(synthetic_dir),
        model=tiny_model_config.model_copy(update={"dropout": 0.1}),
        ablation=AblationFlags(),
        learning_rate=5e-3,
        batch_size=4,
        epochs=2,
        seeds=[1],
    )


def synth_config(**overrides) -> SynthConfig:
    base = {
        "seed": SYNTH_SEED,
        "n_samples": SYNTH_SAMPLES,
        "implicit_rate": 0.3,
        "noise": 0.1,
        "feature_dim": TINY_FEATURE_DIM,
        "grid_cells": TINY_GRID_CELLS,
        "mean_aspects": 2.0,
    }
    base.update(overrides)
    return SynthConfig(**base)


@pytest.fixture(scope="session")
def synthetic_dir(tmp_path_factory):
    """Synthetic corpus generated once per session (read-only for tests)"""
    out = tmp_path_factory.mktemp("synth")
    # at most two visual aspects per image and three images keeps k_max=3 safe
    generate_synthetic(synth_config(mean_aspects=1.5, irrelevant_rate=0.0), out)
    return out


@pytest.fixture(scope="session")
def synthetic_samples(synthetic_dir):
    from fcmf.services.dataset_service import load_dataset

    return load_dataset(synthetic_dir, feature_dim=TINY_FEATURE_DIM, grid_cells=TINY_GRID_CELLS)


@pytest.fixture
def feature_store(synthetic_dir):
    return FeatureStore(synthetic_dir, feature_dim=TINY_FEATURE_DIM, grid_cells=TINY_GRID_CELLS)
