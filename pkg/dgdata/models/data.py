"""
Data records: raw recordings, windows and the source/target split.
"""
from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Domain = Literal["source", "target"]


class RawRecording(BaseModel):
    """
    One continuous sensor recording of one user.

    Attributes:
        user_id: Subject identifier
        recording_id: Identifier unique across the dataset
        sample_rate_hz: Sampling rate of every channel
        channel_names: Names of the retained channels
        samples: Matrix [T, channels]
        activity: Per-sample activity index into label_names
        label_names: Declared activity labels of the dataset
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    user_id: str
    recording_id: str
    sample_rate_hz: float = Field(gt=0)
    channel_names: List[str]
    samples: np.ndarray
    activity: np.ndarray
    label_names: List[str]

    @model_validator(mode="after")
    def _check_shapes(self) -> "RawRecording":
        if self.samples.ndim != 2 or self.samples.shape[1] != len(self.channel_names):
            raise ValueError(f"samples must be [T, {len(self.channel_names)}], got {self.samples.shape}")
        if self.activity.shape != (self.samples.shape[0],):
            raise ValueError("activity stream must have one entry per sample")
        if self.activity.size and (self.activity.min() < 0 or self.activity.max() >= len(self.label_names)):
            raise ValueError("activity ids must index the declared label set")
        return self

    @property
    def length(self) -> int:
        return int(self.samples.shape[0])


class UnlabeledWindow(BaseModel):
    """
    A window with its activity label removed.

    Target training windows are carried in this form so no training code
    can read their labels.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray
    domain: Domain
    seq_index: int = Field(ge=0)
    recording_id: str
    user_id: str

    @field_validator("values")
    @classmethod
    def _two_dimensional(cls, v: np.ndarray) -> np.ndarray:
        if v.ndim != 2:
            raise ValueError(f"window values must be [channels, W], got {v.shape}")
        return v

    @property
    def window_id(self) -> str:
        return f"{self.recording_id}#{self.seq_index}"


class WindowedSample(UnlabeledWindow):
    """
    One fixed-length multichannel window.

    Attributes:
        values: Matrix [channels, W]
        domain: "source" or "target"
        activity: Activity index (None when hidden)
        seq_index: Position of the window on its recording's sliding grid
        recording_id: Recording the window was cut from
        user_id: Subject of the recording
    """

    activity: Optional[int] = Field(None, ge=0)

    def unlabeled(self) -> UnlabeledWindow:
        """Strip the activity label."""
        return UnlabeledWindow(values=self.values, domain=self.domain, seq_index=self.seq_index,
                               recording_id=self.recording_id, user_id=self.user_id)


class ChannelStats(BaseModel):
    """Per-channel mean and standard deviation computed on source training windows."""

    mean: List[float]
    std: List[float]


class SynthDiagnostics(BaseModel):
    """
    Ground truth retained by the synthetic generator; never used for training.

    Attributes:
        state_sequences: Hidden state per sample, keyed by recording id
        window_states: Hidden state per sample of every window, keyed by window id
        transition_matrices: Per-user, per-class transition matrix [K, K]
        state_means: Emission means [C, K, channels] before the user transform
    """

    state_sequences: Dict[str, List[int]]
    window_states: Dict[str, List[int]]
    transition_matrices: Dict[str, List[List[float]]]
    state_means: List[List[List[float]]]


class DatasetSplit(BaseModel):
    """
    Source/target partition consumed by training and evaluation.

    Attributes:
        source_train: Labelled source windows
        target_train: Unlabelled view of every target window
        target_val: Labelled target windows for validation reporting
        target_test: Labelled target windows for the final evaluation
        label_names: Activity names indexed by label id
        channel_names: Channel names in window row order
        sample_rate_hz: Sampling rate shared by both users
        channel_stats: Normalisation statistics applied to every window
        diagnostics: Generator ground truth, synthetic splits only
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    source_train: List[WindowedSample]
    target_train: List[UnlabeledWindow]
    target_val: List[WindowedSample]
    target_test: List[WindowedSample]
    label_names: List[str]
    channel_names: List[str]
    sample_rate_hz: float = Field(gt=0)
    channel_stats: Optional[ChannelStats] = None
    diagnostics: Optional[SynthDiagnostics] = None

    @model_validator(mode="after")
    def _check_partitions(self) -> "DatasetSplit":
        val_ids = {w.window_id for w in self.target_val}
        overlap = val_ids.intersection(w.window_id for w in self.target_test)
        if overlap:
            raise ValueError(f"target_val and target_test share windows: {sorted(overlap)[:3]}")
        if any(isinstance(w, WindowedSample) for w in self.target_train):
            raise ValueError("target_train must hold unlabeled windows")
        return self

    @property
    def n_source(self) -> int:
        return len(self.source_train)

    @property
    def n_target(self) -> int:
        return len(self.target_train)

    @property
    def n_classes(self) -> int:
        return len(self.label_names)

    @property
    def window_shape(self) -> tuple:
        return self.source_train[0].values.shape
