"""
Models for the DGDATA pipeline.
"""

from dgdata.models.config import (
    ArchitectureConfig,
    AttentionConfig,
    ComponentWeights,
    DataConfig,
    LossWeights,
    RunConfig,
    SynthConfig,
    TrainConfig,
    UserTransform,
    load_run_config,
)
from dgdata.models.data import (
    ChannelStats,
    DatasetSplit,
    RawRecording,
    SynthDiagnostics,
    UnlabeledWindow,
    WindowedSample,
)
from dgdata.models.features import FeatureRange, FeatureVector
from dgdata.models.labels import AttentionWeights, PseudoLabels, TemporalStateLabels
from dgdata.models.history import EpochRecord, LossBreakdown, TrainHistory
from dgdata.models.metrics import ConfusionMatrix, Metrics, RunManifest

__all__ = [
    "ArchitectureConfig",
    "AttentionConfig",
    "ComponentWeights",
    "DataConfig",
    "LossWeights",
    "RunConfig",
    "SynthConfig",
    "TrainConfig",
    "UserTransform",
    "load_run_config",
    "ChannelStats",
    "DatasetSplit",
    "RawRecording",
    "SynthDiagnostics",
    "UnlabeledWindow",
    "WindowedSample",
    "FeatureRange",
    "FeatureVector",
    "AttentionWeights",
    "PseudoLabels",
    "TemporalStateLabels",
    "EpochRecord",
    "LossBreakdown",
    "TrainHistory",
    "ConfusionMatrix",
    "Metrics",
    "RunManifest",
]
