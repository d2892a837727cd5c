"""Shared fixtures: tiny configurations, models and datasets."""
from __future__ import annotations

import numpy as np
import pytest

from core.config import BackboneConfig, DataConfig, OptimConfig, RunConfig, SdlConfig, gradcheck_config
from core.model import S2DModel
from core.registry import ensure_builtin_components_registered
from utils.datagen import load_datasets


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale training experiments")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _builtin_components():
    ensure_builtin_components_registered()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_config(overrides=None) -> RunConfig:
    """Small float64 configuration that trains in well under a second per epoch."""
    config = RunConfig(
        backbone=BackboneConfig(image_size=8, patch_size=4, channels=3, embed_dim=8, layers=2, heads=2),
        data=DataConfig(
            num_train=12, num_test=6, sequence_length=4, frames=4, image_size=8, channels=3,
            keypoints=2, landmark_size=8, heatmap_sigma=1.0,
        ),
        sdl=SdlConfig(queue_size=4, top_k=2),
        optim=OptimConfig(epochs=2, batch_size=4),
        checkpoint_every=1,
    )
    return config.with_overrides(overrides) if overrides else config


@pytest.fixture
def tiny():
    return tiny_config()


@pytest.fixture
def tiny_model(tiny):
    return S2DModel(tiny)


@pytest.fixture
def tiny_data(tiny):
    return load_datasets(tiny)


@pytest.fixture
def grad_config():
    return gradcheck_config()
