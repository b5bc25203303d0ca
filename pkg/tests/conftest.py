"""
Shared fixtures: a tiny synthetic cross-user split and matching small configurations.
"""
from typing import Callable

import numpy as np
import pytest

from dgdata.data.synth import synth_crossuser
from dgdata.models.config import (
    ArchitectureConfig,
    AttentionConfig,
    SynthConfig,
    TrainConfig,
    UserTransform,
)
from dgdata.models.data import DatasetSplit

# Central-difference step of every gradient check
FD_STEP = 1e-5

TINY_ARCH = ArchitectureConfig(
    conv1_channels=4,
    conv2_channels=4,
    kernel_size=5,
    latent_dim=4,
    hidden_dim=8,
    adversarial_hidden_dim=8,
)


@pytest.fixture
def tiny_synth_config() -> SynthConfig:
    """Two activities with two states each, 10 Hz, 3 s windows (W = 30)."""
    return SynthConfig(
        n_classes=2,
        states_per_class=2,
        sample_rate_hz=10.0,
        windows_per_user=24,
        target=UserTransform(rotation_degrees=30.0, gain=[1.3, 0.8, 1.1, 0.9, 1.2, 0.7], duration_scale=1.3),
    )


@pytest.fixture
def tiny_split(tiny_synth_config: SynthConfig) -> DatasetSplit:
    """Synthetic split with 24 windows per user."""
    return synth_crossuser(tiny_synth_config, seed=7)


@pytest.fixture
def tiny_train_config() -> TrainConfig:
    """Two epochs of a very small network; fast enough for unit tests."""
    return TrainConfig(
        epochs=2,
        batch_size=8,
        seed=3,
        architecture=TINY_ARCH,
        attention=AttentionConfig(lags=2, top_k=1, states_per_class=2, kmeans_max_iter=10),
    )


def numerical_gradient(f: Callable[[], float], array: np.ndarray, index: tuple, h: float = FD_STEP) -> float:
    """Central difference of ``f`` with respect to ``array[index]``, restoring the entry afterwards."""
    original = array[index]
    array[index] = original + h
    upper = f()
    array[index] = original - h
    lower = f()
    array[index] = original
    return (upper - lower) / (2.0 * h)


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))


@pytest.fixture
def finite_difference() -> Callable[[Callable[[], float], np.ndarray, tuple], float]:
    """Central differences with step ``FD_STEP``."""
    return numerical_gradient
