"""
Data pipeline: dataset loaders, windowing, target split and the synthetic generator.
"""

from dgdata.data.loaders import CHANNELS, SCHEMAS, DatasetSchema, load_dataset
from dgdata.data.windows import (
    compute_channel_stats,
    normalize_channels,
    prepare_split,
    segment_windows,
    split_target,
    window_count,
    window_length,
    window_stride,
)
from dgdata.data.synth import SOURCE_USER, TARGET_USER, synth_crossuser
from dgdata.data.storage import load_split, save_split

__all__ = [
    "CHANNELS",
    "SCHEMAS",
    "DatasetSchema",
    "load_dataset",
    "compute_channel_stats",
    "normalize_channels",
    "prepare_split",
    "segment_windows",
    "split_target",
    "window_count",
    "window_length",
    "window_stride",
    "SOURCE_USER",
    "TARGET_USER",
    "synth_crossuser",
    "load_split",
    "save_split",
]
