# Copyright 2024
# Directory: ContourMARL/tests/conftest.py

"""
Shared fixtures: seeded generators, small masks and grids, tiny network
configurations and a throwaway corpus.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to Python path so that `app` package is importable
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from app.core.config import SacConfig  # noqa: E402
from app.models.entities import BinaryMask, BoundingBox, FeatureGrid, ShapeSpec  # noqa: E402
from app.services import synthdata  # noqa: E402


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def disk_mask(size: int = 32, cx: float = 16.0, cy: float = 16.0, r: float = 8.0) -> BinaryMask:
    ticks = np.arange(size) + 0.5
    ys, xs = np.meshgrid(ticks, ticks, indexing="ij")
    return BinaryMask(bits=(xs - cx) ** 2 + (ys - cy) ** 2 <= r * r)


@pytest.fixture
def disk() -> BinaryMask:
    return disk_mask()


@pytest.fixture
def disk_grid(disk) -> FeatureGrid:
    return synthdata.make_feature_grid(disk, ShapeSpec(size=32, seed=5))


@pytest.fixture
def disk_box() -> BoundingBox:
    return BoundingBox(x_min=8.0, y_min=8.0, x_max=24.0, y_max=24.0)


def tiny_sac_config(**overrides) -> SacConfig:
    values = dict(
        n_points=12, horizon=2, delta=3.0, k_neighbors=2, embed_dim=4, patch_radius=2.0,
        hidden_dim=4, layers=1, window=4, head_hidden=6, critic_hidden=6,
        batch_size=8, warmup_transitions=8, buffer_capacity=500,
        epochs=1, episodes_per_epoch=2, lr=1e-3, seed=3,
    )
    values.update(overrides)
    return SacConfig(**values)


@pytest.fixture
def tiny_config() -> SacConfig:
    return tiny_sac_config()


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("corpus")
    synthdata.build_corpus(10, root, size=40, seed=11, kinds=("ellipse", "blob"))
    return root


@pytest.fixture
def make_config():
    """Factory for tiny configs with keyword overrides."""
    return tiny_sac_config
