"""
Configuration models for DGDATA runs.

Defaults are the reference hyperparameters of the method; everything else is a
documented default that can be overridden from a JSON config.
"""
import json
import math
from pathlib import Path
from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from dgdata.exceptions import ConfigurationError

SchemaName = Literal["oppt", "pamap2", "dsads", "generic-csv"]


class ArchitectureConfig(BaseModel):
    """
    Network shapes shared by the feature extractor and the three components.

    Attributes:
        conv1_channels: Output channels of the first convolution block
        conv2_channels: Output channels of the second convolution block
        kernel_size: Kernel width of both convolutions
        conv_stride: Stride of both convolutions
        pool_width: Max-pool window width
        pool_stride: Max-pool stride
        latent_dim: Latent dimension Z of every CVAE block
        hidden_dim: Hidden width of encoder and decoder
        adversarial_hidden_dim: Hidden width of the adversarial heads
        bn_momentum: Running-statistics momentum
        bn_eps: Batch-norm variance guard
    """
    model_config = ConfigDict(extra="forbid")

    conv1_channels: int = Field(32, ge=1)
    conv2_channels: int = Field(64, ge=1)
    kernel_size: int = Field(9, ge=1)
    conv_stride: int = Field(1, ge=1)
    pool_width: int = Field(2, ge=1)
    pool_stride: int = Field(2, ge=1)
    latent_dim: int = Field(64, ge=1)
    hidden_dim: int = Field(256, ge=1)
    adversarial_hidden_dim: int = Field(128, ge=1)
    bn_momentum: float = Field(0.1, gt=0, le=1)
    bn_eps: float = Field(1e-5, gt=0)


class LossWeights(BaseModel):
    """
    Coefficients of one component's total loss.

    Attributes:
        alpha: Reconstruction weight
        zeta: Mean-variance weight
        gamma: Class-type constraint weight
        delta: Domain constraint weight
        eta: Temporal-state constraint weight
        var_target: Target latent variance of the mean-variance term
    """
    model_config = ConfigDict(extra="forbid")

    alpha: float = Field(1.0, ge=0)
    zeta: float = Field(10.0, ge=0)
    gamma: float = Field(30.0, ge=0)
    delta: float = Field(1.0, ge=0)
    eta: float = Field(10.0, ge=0)
    var_target: float = Field(1.0, gt=0)


class ComponentWeights(BaseModel):
    """Per-component loss weights; the fine-grained component has no eta term."""
    model_config = ConfigDict(extra="forbid")

    fine_grained: LossWeights = Field(default_factory=LossWeights)
    temporal: LossWeights = Field(default_factory=LossWeights)
    classifier: LossWeights = Field(default_factory=LossWeights)


class AttentionConfig(BaseModel):
    """Temporal relation attention and state-labelling settings."""
    model_config = ConfigDict(extra="forbid")

    lags: int = Field(4, ge=1, description="Number of autoregressive lags p")
    top_k: int = Field(2, ge=1)
    rho: float = Field(0.5, ge=0, le=1)
    states_per_class: int = Field(3, ge=1, description="Temporal states K per activity")
    kmeans_max_iter: int = Field(50, ge=1)
    median_width: int = Field(3, ge=1)
    ridge: float = Field(1e-10, ge=0, description="Relative ridge added to the normal equations")

    @model_validator(mode="after")
    def _top_k_within_lags(self) -> "AttentionConfig":
        if self.top_k > self.lags:
            raise ValueError(f"top_k ({self.top_k}) must not exceed lags ({self.lags})")
        if self.median_width % 2 == 0:
            raise ValueError("median_width must be odd")
        return self


class TrainConfig(BaseModel):
    """
    Everything the training loop needs.

    Attributes:
        epochs: Training epochs
        batch_size: Windows per minibatch (half source, half target)
        learning_rate: Adam learning rate
        beta1: Adam first-moment decay
        beta2: Adam second-moment decay
        adam_eps: Adam denominator guard
        weight_decay: Decoupled weight decay
        warmup_epochs: Epochs before target pseudo-classes enter the class terms
        temporal_grl_lambda: Fixed reversal strength inside the temporal component
        temporal_updates_extractor: Let the temporal component's gradients reach the extractor
        vote_target_classes: Replace target pseudo classes by the majority of their uninterrupted run
        grl_gamma: Steepness of the classifier's reversal ramp
        seed: Seed for initialisation, batching, sampling and clustering
        use_fine_grained: Run the fine-grained component phase
        use_temporal_attention: Refine features before state labelling
        diagnostics_dir: Directory for per-epoch attention dumps and divergence dumps
        checkpoint_every: Save a checkpoint every N epochs into diagnostics_dir
    """
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(100, ge=1)
    batch_size: int = Field(64, ge=4)
    learning_rate: float = Field(1e-3, gt=0)
    beta1: float = Field(0.2, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    weight_decay: float = Field(5e-4, ge=0)
    warmup_epochs: int = Field(1, ge=0)
    temporal_grl_lambda: float = Field(1.0, ge=0)
    temporal_updates_extractor: bool = False
    vote_target_classes: bool = True
    grl_gamma: float = Field(10.0, gt=0)
    seed: int = Field(0, ge=0)
    architecture: ArchitectureConfig = Field(default_factory=ArchitectureConfig)
    weights: ComponentWeights = Field(default_factory=ComponentWeights)
    attention: AttentionConfig = Field(default_factory=AttentionConfig)
    use_fine_grained: bool = True
    use_temporal_attention: bool = True
    diagnostics_dir: Optional[str] = None
    checkpoint_every: Optional[int] = Field(None, ge=1)


class DataConfig(BaseModel):
    """Windowing and split settings for recorded datasets."""
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    schema_name: SchemaName = Field("generic-csv", alias="schema")
    window_seconds: float = Field(3.0, gt=0)
    overlap: float = Field(0.5, ge=0, lt=1)
    val_fraction: float = Field(0.5, gt=0, lt=1)
    sample_rate_hz: Optional[float] = Field(None, gt=0)
    source_user: Optional[str] = None
    target_user: Optional[str] = None


class UserTransform(BaseModel):
    """
    How a synthetic user distorts the shared generative process.

    Attributes:
        rotation: Explicit channel mixing matrix (channels x channels)
        rotation_degrees: Rotation about the z axis applied to every xyz triad
            when no explicit matrix is given
        gain: Per-channel gain (defaults to all ones); a negative entry mirrors the axis
        offset: Per-channel bias added after rotation and gain (defaults to zeros)
        duration_scale: Multiplier on every mean state duration
    """
    model_config = ConfigDict(extra="forbid")

    rotation: Optional[List[List[float]]] = None
    rotation_degrees: float = 0.0
    gain: Optional[List[float]] = None
    offset: Optional[List[float]] = None
    duration_scale: float = Field(1.0, gt=0)

    def rotation_matrix(self, channels: int) -> np.ndarray:
        """
        Build the channel mixing matrix.

        Raises:
            ConfigurationError: If the matrix is not square of the right size or is singular
        """
        if self.rotation is not None:
            matrix = np.asarray(self.rotation, dtype=np.float64)
            if matrix.shape != (channels, channels):
                raise ConfigurationError("rotation must be channels x channels",
                                         details={"shape": matrix.shape, "channels": channels})
        else:
            matrix = np.eye(channels)
            angle = math.radians(self.rotation_degrees)
            block = np.array([[math.cos(angle), -math.sin(angle), 0.0],
                              [math.sin(angle), math.cos(angle), 0.0],
                              [0.0, 0.0, 1.0]])
            for start in range(0, channels - channels % 3, 3):
                matrix[start:start + 3, start:start + 3] = block
        if abs(np.linalg.det(matrix)) < 1e-9:
            raise ConfigurationError("rotation matrix is singular", details={"channels": channels})
        return matrix

    def gain_vector(self, channels: int) -> np.ndarray:
        if self.gain is None:
            return np.ones(channels)
        gain = np.asarray(self.gain, dtype=np.float64)
        if gain.shape != (channels,) or np.any(gain == 0):
            raise ConfigurationError("gain must have one non-zero entry per channel",
                                     details={"gain": self.gain, "channels": channels})
        return gain

    def offset_vector(self, channels: int) -> np.ndarray:
        if self.offset is None:
            return np.zeros(channels)
        offset = np.asarray(self.offset, dtype=np.float64)
        if offset.shape != (channels,) or not np.all(np.isfinite(offset)):
            raise ConfigurationError("offset must have one finite entry per channel",
                                     details={"offset": self.offset, "channels": channels})
        return offset


class SynthConfig(BaseModel):
    """
    Desk-scale cross-user generator settings.

    Every activity is a cyclic left-to-right chain of ``states_per_class``
    Gaussian emission regimes scattered around an activity centre; the target
    user applies its transform to the same generative process. The default
    target sees the triads rotated, the gyroscope mirrored and biased, and
    every state lasting longer.
    """
    model_config = ConfigDict(extra="forbid")

    n_classes: int = Field(3, ge=1)
    states_per_class: int = Field(3, ge=1)
    channels: int = Field(6, ge=1)
    sample_rate_hz: float = Field(30.0, gt=0)
    window_seconds: float = Field(3.0, gt=0)
    overlap: float = Field(0.5, ge=0, lt=1)
    windows_per_user: int = Field(200, ge=1)
    mean_state_seconds: float = Field(8.0, gt=0)
    class_separation: float = Field(2.5, ge=0)
    state_separation: float = Field(0.8, gt=0)
    noise_std: float = Field(0.3, ge=0)
    val_fraction: float = Field(0.5, gt=0, lt=1)
    source: UserTransform = Field(default_factory=UserTransform)
    target: UserTransform = Field(
        default_factory=lambda: UserTransform(
            rotation_degrees=20.0,
            gain=[1.2, 0.9, 1.1, -1.0, -1.0, -1.0],
            offset=[0.0, 0.0, 0.0, 5.0, -5.0, 5.0],
            duration_scale=1.5,
        )
    )


class RunConfig(BaseModel):
    """Root configuration object read by the command line."""
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(0, ge=0)
    train: TrainConfig = Field(default_factory=TrainConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)

    def with_seed(self, seed: int) -> "RunConfig":
        """Return a copy whose run and training seeds are both ``seed``."""
        return self.model_copy(update={"seed": seed,
                                       "train": self.train.model_copy(update={"seed": seed})})


def load_run_config(path: Optional[Union[str, Path]]) -> RunConfig:
    """
    Load a run configuration from JSON; ``None`` yields the defaults.

    Raises:
        ConfigurationError: If the file is missing, not JSON, or fails validation
    """
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigurationError("config file not found", details={"path": str(path)}) from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"config is not valid JSON: {e}", details={"path": str(path)}) from e
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigurationError(f"invalid configuration: {e}", details={"path": str(path)}) from e
