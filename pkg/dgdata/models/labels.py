"""
Attention weights and the pseudo labels refreshed every epoch.
"""
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


def composite_label(classes, states, k: int) -> np.ndarray:
    """Composite class-state label ``class * k + state``; -1 where the class is unknown (-1)."""
    classes = np.asarray(classes, dtype=np.int64)
    return np.where(classes >= 0, classes * k + np.asarray(states, dtype=np.int64), -1)


class AttentionWeights(BaseModel):
    """
    Autoregressive lag coefficients of the temporal relation attention.

    Attributes:
        beta: Coefficient per lag, beta[0] weighting the previous window
        p: Number of lags
        residual: Euclidean norm of the least-squares residual
    """

    beta: List[float]
    p: int = Field(ge=1)
    residual: float = Field(ge=0)

    @model_validator(mode="after")
    def _one_beta_per_lag(self) -> "AttentionWeights":
        if len(self.beta) != self.p:
            raise ValueError(f"expected {self.p} lag coefficients, got {len(self.beta)}")
        return self


class TemporalStateLabels(BaseModel):
    """
    Per-window temporal-state ids within each activity class.

    Attributes:
        states: State id per training window, in [0, K)
        k: States per class
        epoch: Epoch that produced the assignment (0 = initial all-zero labels)
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    states: np.ndarray
    k: int = Field(ge=1)
    epoch: int = Field(ge=0)

    @model_validator(mode="after")
    def _states_in_range(self) -> "TemporalStateLabels":
        if self.states.size and (self.states.min() < 0 or self.states.max() >= self.k):
            raise ValueError(f"state ids must lie in [0, {self.k})")
        return self

    @classmethod
    def initial(cls, n_windows: int, k: int) -> "TemporalStateLabels":
        """All-zero labels used before the temporal component has run."""
        return cls(states=np.zeros(n_windows, dtype=np.int64), k=k, epoch=0)


class PseudoLabels(BaseModel):
    """
    Temporal states plus class labels for every training window.

    ``classes`` holds true labels for source windows and the classifier's
    predictions for target windows; -1 marks a target window whose class is
    not yet available (warm-up).

    Attributes:
        temporal_states: Current state assignment
        classes: Class id per training window, -1 when unknown
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    temporal_states: TemporalStateLabels
    classes: np.ndarray

    @model_validator(mode="after")
    def _aligned(self) -> "PseudoLabels":
        if self.classes.shape != self.temporal_states.states.shape:
            raise ValueError("classes and states must cover the same windows")
        return self

    @property
    def states(self) -> np.ndarray:
        return self.temporal_states.states

    @property
    def k(self) -> int:
        return self.temporal_states.k

    @property
    def epoch(self) -> int:
        return self.temporal_states.epoch

    @property
    def composite(self) -> np.ndarray:
        """Composite class-state label ``class * K + state``; -1 where the class is unknown."""
        return composite_label(self.classes, self.states, self.k)

    def churn(self, previous: Optional["PseudoLabels"]) -> float:
        """Fraction of windows whose temporal state changed since ``previous``."""
        if previous is None or previous.states.shape != self.states.shape or not self.states.size:
            return 0.0
        return float(np.mean(previous.states != self.states))
