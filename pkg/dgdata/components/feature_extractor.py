"""
The global feature extractor shared by all three components.
"""
from typing import List, Sequence

import numpy as np

from dgdata.exceptions import ConfigurationError, DimensionError, StateError
from dgdata.models.config import ArchitectureConfig
from dgdata.models.data import UnlabeledWindow
from dgdata.models.features import FeatureRange, FeatureVector
from dgdata.nn import functional as F
from dgdata.nn.module import BatchNorm1d, Conv1d, Flatten, MaxPool1d, Module, ReLU
from dgdata.nn.tensor import Tensor


def _conv_length(length: int, kernel: int, stride: int) -> int:
    return (length - kernel) // stride + 1


def feature_dim(window_length: int, arch: ArchitectureConfig) -> int:
    """
    Length of the flattened feature vector for a window of ``window_length`` samples.

    Raises:
        ConfigurationError: If a convolution or pooling stage has no output
    """
    length = window_length
    for kernel, stride in (
        (arch.kernel_size, arch.conv_stride),
        (arch.pool_width, arch.pool_stride),
        (arch.kernel_size, arch.conv_stride),
        (arch.pool_width, arch.pool_stride),
    ):
        if length < kernel:
            raise ConfigurationError("window too short for the extractor architecture",
                                     details={"window_length": window_length, "stage_input": length,
                                              "kernel": kernel})
        length = _conv_length(length, kernel, stride)
    return arch.conv2_channels * length


class FeatureExtractor(Module):
    """
    Two convolution blocks (conv, batch norm, ReLU, max-pool) and a flatten.

    Args:
        in_channels: Sensor channels per window
        window_length: Samples per window W
        arch: Layer sizes
        rng: Generator used for weight initialisation
    """

    def __init__(self, in_channels: int, window_length: int, arch: ArchitectureConfig,
                 rng: np.random.Generator):
        super().__init__()
        self.in_channels = in_channels
        self.window_length = window_length
        self.output_dim = feature_dim(window_length, arch)
        self.conv1 = Conv1d(in_channels, arch.conv1_channels, arch.kernel_size, rng, stride=arch.conv_stride)
        self.bn1 = BatchNorm1d(arch.conv1_channels, momentum=arch.bn_momentum, eps=arch.bn_eps)
        self.conv2 = Conv1d(arch.conv1_channels, arch.conv2_channels, arch.kernel_size, rng,
                            stride=arch.conv_stride)
        self.bn2 = BatchNorm1d(arch.conv2_channels, momentum=arch.bn_momentum, eps=arch.bn_eps)
        self.relu = ReLU()
        self.pool = MaxPool1d(arch.pool_width, arch.pool_stride)
        self.flatten = Flatten()

    def __call__(self, x: Tensor) -> Tensor:
        """
        Map a [n, channels, W] batch to [n, D] features.

        Raises:
            DimensionError: If the channel count or window width differs from the configured one
        """
        if x.data.ndim != 3 or x.shape[1:] != (self.in_channels, self.window_length):
            raise DimensionError("window shape does not match the extractor",
                                 details={"expected": (self.in_channels, self.window_length), "got": x.shape})
        h = self.pool(self.relu(self.bn1(self.conv1(x))))
        h = self.pool(self.relu(self.bn2(self.conv2(h))))
        return self.flatten(h)

    def embed(self, windows: Sequence[UnlabeledWindow], batch_size: int = 256) -> np.ndarray:
        """Features of many windows as a [n, D] array, computed in eval mode without a graph."""
        if not windows:
            return np.zeros((0, self.output_dim))
        chunks: List[np.ndarray] = []
        with self.inference():
            for start in range(0, len(windows), batch_size):
                batch = np.stack([w.values for w in windows[start:start + batch_size]])
                chunks.append(self(Tensor(batch)).data)
        return np.concatenate(chunks)


def extract_features(window: UnlabeledWindow, extractor: FeatureExtractor) -> FeatureVector:
    """
    Feature vector of a single window.

    Batch norm uses its running statistics, so the result depends only on
    the window and the parameters.

    Raises:
        DimensionError: If the window width does not match the extractor
    """
    values = extractor.embed([window])[0]
    return FeatureVector(values=values, window_id=window.window_id, seq_index=window.seq_index)


def squash_features(features: FeatureVector, feature_range: FeatureRange) -> FeatureVector:
    """
    Scale a feature vector into [0, 1] by the running range.

    Values outside the range are clipped and zero-width dimensions map to 0.5.

    Raises:
        StateError: If the range has not seen any batch yet
    """
    if not feature_range.initialized:
        raise StateError("feature range has not been initialised")
    squashed = F.squash(Tensor(features.values[None, :]), feature_range.lower, feature_range.upper)
    return FeatureVector(values=squashed.data[0], window_id=features.window_id, seq_index=features.seq_index)
