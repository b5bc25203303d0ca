"""
Sliding-window segmentation, channel normalisation and the target split.
"""
import logging
from typing import List, Sequence, Tuple, TypeVar

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.model_selection import train_test_split

from dgdata.exceptions import ConfigurationError, DataError
from dgdata.models.data import (
    ChannelStats,
    DatasetSplit,
    Domain,
    RawRecording,
    UnlabeledWindow,
    WindowedSample,
)

logger = logging.getLogger("dgdata.data")

W = TypeVar("W", bound=UnlabeledWindow)


def window_length(window_seconds: float, sample_rate_hz: float) -> int:
    """Samples per window: round(window_seconds * sample_rate_hz)."""
    return int(round(window_seconds * sample_rate_hz))


def window_stride(length: int, overlap: float) -> int:
    """Samples between window starts: length * (1 - overlap), at least 1."""
    if not 0.0 <= overlap < 1.0:
        raise ConfigurationError("overlap must lie in [0, 1)", details={"overlap": overlap})
    return max(1, int(round(length * (1.0 - overlap))))


def window_count(total: int, length: int, stride: int) -> int:
    """Number of full windows on the sliding grid of a recording of ``total`` samples."""
    return 0 if total < length else (total - length) // stride + 1


def segment_windows(
    rec: RawRecording,
    window_seconds: float,
    overlap: float,
    domain: Domain = "source",
) -> List[WindowedSample]:
    """
    Cut a recording into fixed-length overlapping windows.

    Windows whose span crosses an activity boundary are discarded. The
    ``seq_index`` of a window is its position on the full sliding grid, so
    indices stay chronological and gaps mark discarded windows.

    Args:
        rec: Recording to segment
        window_seconds: Window duration
        overlap: Fraction of a window shared with the next one, in [0, 1)
        domain: Domain tag stored on every window

    Returns:
        Windows in chronological order

    Raises:
        ConfigurationError: If overlap is out of range
        DataError: If the recording is shorter than one window
    """
    length = window_length(window_seconds, rec.sample_rate_hz)
    stride = window_stride(length, overlap)
    if length < 1 or rec.length < length:
        raise DataError("recording shorter than one window",
                        details={"recording": rec.recording_id, "samples": rec.length, "window": length})

    # [n, channels, W] and [n, W] views on the full grid
    values = sliding_window_view(rec.samples, length, axis=0)[::stride]
    activity = sliding_window_view(rec.activity, length)[::stride]
    uniform = np.all(activity == activity[:, :1], axis=1)

    windows = []
    for seq_index in np.flatnonzero(uniform):
        windows.append(WindowedSample(
            values=np.ascontiguousarray(values[seq_index], dtype=np.float64),
            domain=domain,
            activity=int(activity[seq_index, 0]),
            seq_index=int(seq_index),
            recording_id=rec.recording_id,
            user_id=rec.user_id,
        ))
    return windows


def compute_channel_stats(windows: Sequence[UnlabeledWindow]) -> ChannelStats:
    """Per-channel mean and standard deviation over all samples of all windows."""
    if not windows:
        raise DataError("cannot compute channel statistics of zero windows")
    stacked = np.stack([w.values for w in windows])
    return ChannelStats(mean=stacked.mean(axis=(0, 2)).tolist(), std=stacked.std(axis=(0, 2)).tolist())


def normalize_channels(windows: Sequence[W], stats: ChannelStats) -> List[W]:
    """
    Standardise every channel with source-train statistics.

    Channels whose standard deviation is zero pass through unchanged.
    """
    mean = np.asarray(stats.mean)[:, None]
    std = np.asarray(stats.std)[:, None]
    active = std[:, 0] > 0
    normalized = []
    for window in windows:
        values = window.values.copy()
        values[active] = (values[active] - mean[active]) / std[active]
        normalized.append(window.model_copy(update={"values": values}))
    return normalized


def _split_per_class(
    index: np.ndarray, labels: np.ndarray, val_fraction: float, seed: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Shuffle every class and send round(n * val_fraction) of it, clipped to [1, n - 1], to validation."""
    rng = np.random.default_rng(seed)
    val, test = [], []
    for c in np.unique(labels):
        rows = index[labels == c]
        rows = rows[rng.permutation(rows.size)]
        n_val = min(max(int(round(rows.size * val_fraction)), 1), rows.size - 1)
        val.append(rows[:n_val])
        test.append(rows[n_val:])
    return np.concatenate(val), np.concatenate(test)


def split_target(
    windows: Sequence[WindowedSample],
    val_fraction: float = 0.5,
    seed: int = 0,
) -> Tuple[List[WindowedSample], List[WindowedSample]]:
    """
    Stratified split of labelled target windows into validation and test.

    Classes with fewer than two windows cannot be stratified; they are kept
    whole in the test subset and a warning is logged. When the split is too
    small for a stratified draw every class is split on its own, keeping at
    least one window on each side. Both subsets keep the input order.

    Raises:
        ConfigurationError: If val_fraction is not in (0, 1)
        DataError: If a window has no activity label
    """
    if not 0.0 < val_fraction < 1.0:
        raise ConfigurationError("val_fraction must lie in (0, 1)", details={"val_fraction": val_fraction})
    labels = np.array([-1 if w.activity is None else w.activity for w in windows])
    if np.any(labels < 0):
        raise DataError("split_target needs labelled windows")

    classes, counts = np.unique(labels, return_counts=True)
    sparse = classes[counts < 2]
    if sparse.size:
        logger.warning("Classes %s have fewer than 2 windows; kept whole in the test subset", sparse.tolist())
    splittable = np.flatnonzero(~np.isin(labels, sparse))

    val_idx: np.ndarray = np.array([], dtype=np.int64)
    test_idx: np.ndarray = np.array([], dtype=np.int64)
    if splittable.size:
        try:
            val_idx, test_idx = train_test_split(
                splittable, train_size=val_fraction, stratify=labels[splittable], random_state=seed
            )
        except ValueError as e:
            logger.info("Stratified split refused (%s); splitting each class separately", e)
            val_idx, test_idx = _split_per_class(splittable, labels[splittable], val_fraction, seed)
    test_idx = np.concatenate([test_idx, np.flatnonzero(np.isin(labels, sparse))])
    return [windows[i] for i in np.sort(val_idx)], [windows[i] for i in np.sort(test_idx)]


def prepare_split(
    recordings: Sequence[RawRecording],
    source_user: str,
    target_user: str,
    window_seconds: float = 3.0,
    overlap: float = 0.5,
    val_fraction: float = 0.5,
    seed: int = 0,
) -> DatasetSplit:
    """
    Segment, normalise and split the recordings of one source/target pair.

    Recordings shorter than one window are skipped with a warning.

    Raises:
        DataError: If either user has no usable windows
    """
    if not recordings:
        raise DataError("no recordings supplied")
    label_names = recordings[0].label_names
    channel_names = recordings[0].channel_names
    rate = recordings[0].sample_rate_hz
    if any(rec.sample_rate_hz != rate for rec in recordings):
        raise DataError("recordings disagree on the sample rate")
    length = window_length(window_seconds, rate)

    def windows_of(user: str, domain: Domain) -> List[WindowedSample]:
        out: List[WindowedSample] = []
        for rec in recordings:
            if rec.user_id != user:
                continue
            if rec.length < length:
                logger.warning("Skipping recording %s: %d samples < one window of %d",
                               rec.recording_id, rec.length, length)
                continue
            out.extend(segment_windows(rec, window_seconds, overlap, domain))
        if not out:
            raise DataError("user has no usable windows", details={"user": user})
        return out

    source = windows_of(source_user, "source")
    target = windows_of(target_user, "target")
    stats = compute_channel_stats(source)
    source = normalize_channels(source, stats)
    target = normalize_channels(target, stats)
    val, test = split_target(target, val_fraction, seed)
    logger.info("Prepared split %s -> %s: %d source, %d target (%d val / %d test)",
                source_user, target_user, len(source), len(target), len(val), len(test))
    return DatasetSplit(
        source_train=source,
        target_train=[w.unlabeled() for w in target],
        target_val=val,
        target_test=test,
        label_names=list(label_names),
        channel_names=list(channel_names),
        sample_rate_hz=rate,
        channel_stats=stats,
    )
