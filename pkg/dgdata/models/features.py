"""
Feature vectors produced by the global feature extractor and their running range.
"""
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class FeatureVector(BaseModel):
    """
    Output of the feature extractor for one window.

    Attributes:
        values: Feature vector [D]
        window_id: Identity of the source window
        seq_index: Position of the window on its recording's grid
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray
    window_id: str
    seq_index: int = Field(ge=0)

    @model_validator(mode="after")
    def _finite_vector(self) -> "FeatureVector":
        if self.values.ndim != 1:
            raise ValueError(f"feature vector must be one-dimensional, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature vector holds non-finite values")
        return self

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


class FeatureRange(BaseModel):
    """
    Running per-dimension minimum and maximum of training features.

    The range grows with every :meth:`update` until it is frozen; the
    trainer freezes it after the first epoch so reconstruction targets keep
    a fixed scale.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    frozen: bool = False

    @model_validator(mode="after")
    def _ordered(self) -> "FeatureRange":
        if (self.lower is None) != (self.upper is None):
            raise ValueError("lower and upper must be set together")
        if self.lower is not None and self.upper is not None:
            if self.lower.shape != self.upper.shape:
                raise ValueError("lower and upper must have the same shape")
            if np.any(self.lower > self.upper):
                raise ValueError("lower must not exceed upper")
        return self

    @property
    def initialized(self) -> bool:
        return self.lower is not None

    def update(self, features: np.ndarray) -> None:
        """Widen the range to cover a [n, D] batch; no-op once frozen."""
        if self.frozen:
            return
        batch_min = features.min(axis=0)
        batch_max = features.max(axis=0)
        if self.lower is None or self.upper is None:
            self.lower, self.upper = batch_min.copy(), batch_max.copy()
        else:
            np.minimum(self.lower, batch_min, out=self.lower)
            np.maximum(self.upper, batch_max, out=self.upper)

    def freeze(self) -> None:
        self.frozen = True
