"""
Desk-scale cross-user generator.

Every activity is a cyclic left-to-right chain of temporal states, each
emitting Gaussian samples around its own mean; the state means of one
activity scatter around a common centre. Both users share the chain and the
emission means; the target user sees them through a channel rotation, a
per-channel gain and offset, and dilated state durations.
"""
import logging
from typing import Dict, List, Tuple

import numpy as np

from dgdata.data.loaders import CHANNELS
from dgdata.data.windows import prepare_split, window_length, window_stride
from dgdata.models.config import SynthConfig, UserTransform
from dgdata.models.data import DatasetSplit, RawRecording, SynthDiagnostics

logger = logging.getLogger("dgdata.data")

SOURCE_USER = "U1"
TARGET_USER = "U2"


def _channel_names(channels: int) -> List[str]:
    if channels <= len(CHANNELS):
        return CHANNELS[:channels]
    return [f"ch{i}" for i in range(channels)]


def _windows_per_class(total: int, n_classes: int) -> List[int]:
    base, remainder = divmod(total, n_classes)
    return [base + (1 if c < remainder else 0) for c in range(n_classes)]


def transition_matrix(mean_durations: np.ndarray) -> np.ndarray:
    """
    Left-to-right transition matrix of one activity.

    A state with mean duration ``d`` samples stays with probability
    ``1 - 1/d`` and otherwise moves to the next state, wrapping around.
    """
    k = len(mean_durations)
    leave = 1.0 / np.maximum(mean_durations, 1.0)
    matrix = np.zeros((k, k))
    for s in range(k):
        if k == 1:
            matrix[s, s] = 1.0
            continue
        matrix[s, s] = 1.0 - leave[s]
        matrix[s, (s + 1) % k] = leave[s]
    return matrix


def _state_sequence(length: int, mean_durations: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    k = len(mean_durations)
    states = np.empty(length, dtype=np.int64)
    state = int(rng.integers(k))
    filled = 0
    while filled < length:
        run = int(rng.geometric(1.0 / max(mean_durations[state], 1.0)))
        states[filled:filled + run] = state
        filled += run
        state = (state + 1) % k
    return states


def _user_recordings(
    cfg: SynthConfig,
    user: str,
    transform: UserTransform,
    means: np.ndarray,
    base_durations: np.ndarray,
    rng: np.random.Generator,
) -> Tuple[List[RawRecording], Dict[str, np.ndarray], Dict[str, List[List[float]]]]:
    rotation = transform.rotation_matrix(cfg.channels)
    gain = transform.gain_vector(cfg.channels)
    offset = transform.offset_vector(cfg.channels)
    durations = base_durations * transform.duration_scale
    length = window_length(cfg.window_seconds, cfg.sample_rate_hz)
    stride = window_stride(length, cfg.overlap)
    label_names = [f"activity_{c}" for c in range(cfg.n_classes)]

    recordings, sequences, matrices = [], {}, {}
    for c, n_windows in enumerate(_windows_per_class(cfg.windows_per_user, cfg.n_classes)):
        if n_windows == 0:
            continue
        total = length + (n_windows - 1) * stride
        states = _state_sequence(total, durations[c], rng)
        clean = means[c, states] @ rotation.T * gain + offset
        samples = clean + cfg.noise_std * rng.standard_normal(clean.shape)
        recording_id = f"{user}-a{c}"
        recordings.append(RawRecording(
            user_id=user,
            recording_id=recording_id,
            sample_rate_hz=cfg.sample_rate_hz,
            channel_names=_channel_names(cfg.channels),
            samples=samples,
            activity=np.full(total, c, dtype=np.int64),
            label_names=label_names,
        ))
        sequences[recording_id] = states
        matrices[f"{user}/{c}"] = transition_matrix(durations[c]).tolist()
    return recordings, sequences, matrices


def synth_crossuser(cfg: SynthConfig, seed: int) -> DatasetSplit:
    """
    Generate a source/target split with retained ground-truth states.

    The source user ``U1`` and target user ``U2`` each get one recording
    per activity, sized so that its windows add up to
    ``cfg.windows_per_user``.

    Args:
        cfg: Generator settings
        seed: Seed of every random draw

    Returns:
        A prepared split whose ``diagnostics`` hold the hidden states

    Raises:
        ConfigurationError: If a user transform is invalid (e.g. a singular rotation)
    """
    rng = np.random.default_rng(seed)
    centres = rng.normal(0.0, cfg.class_separation, size=(cfg.n_classes, 1, cfg.channels))
    means = centres + rng.normal(0.0, cfg.state_separation,
                                 size=(cfg.n_classes, cfg.states_per_class, cfg.channels))
    base_durations = (cfg.mean_state_seconds * cfg.sample_rate_hz
                      * rng.uniform(0.6, 1.4, size=(cfg.n_classes, cfg.states_per_class)))

    recordings: List[RawRecording] = []
    sequences: Dict[str, np.ndarray] = {}
    matrices: Dict[str, List[List[float]]] = {}
    for user, transform in ((SOURCE_USER, cfg.source), (TARGET_USER, cfg.target)):
        recs, seqs, mats = _user_recordings(cfg, user, transform, means, base_durations, rng)
        recordings.extend(recs)
        sequences.update(seqs)
        matrices.update(mats)

    split = prepare_split(recordings, SOURCE_USER, TARGET_USER, window_seconds=cfg.window_seconds,
                          overlap=cfg.overlap, val_fraction=cfg.val_fraction, seed=seed)

    length = window_length(cfg.window_seconds, cfg.sample_rate_hz)
    stride = window_stride(length, cfg.overlap)
    window_states = {}
    for window in list(split.source_train) + list(split.target_train):
        start = window.seq_index * stride
        window_states[window.window_id] = sequences[window.recording_id][start:start + length].tolist()

    diagnostics = SynthDiagnostics(
        state_sequences={rid: seq.tolist() for rid, seq in sequences.items()},
        window_states=window_states,
        transition_matrices=matrices,
        state_means=means.tolist(),
    )
    logger.info("Synthesised %d source and %d target windows (%d classes, %d states)",
                split.n_source, split.n_target, cfg.n_classes, cfg.states_per_class)
    return split.model_copy(update={"diagnostics": diagnostics})
