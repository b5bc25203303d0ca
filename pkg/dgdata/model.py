"""
The trained DGDATA model and the mutable state of a training run.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from dgdata.components.classifier import ClassifierComponent, predict_windows
from dgdata.components.feature_extractor import FeatureExtractor
from dgdata.components.fine_grained import FineGrainedComponent
from dgdata.components.temporal import TemporalComponent
from dgdata.exceptions import DimensionError
from dgdata.models.config import TrainConfig
from dgdata.models.data import UnlabeledWindow
from dgdata.models.features import FeatureRange
from dgdata.models.history import TrainHistory
from dgdata.models.labels import PseudoLabels
from dgdata.nn.module import Module
from dgdata.nn.optim import Adam

# Seed-sequence stream ids; every random consumer owns one stream
STREAM_INIT = 0
STREAM_BATCHING = 1
STREAM_SAMPLING = {"fine_grained": 2, "temporal": 3, "classifier": 4}

OPTIMIZED = ("extractor", "fine_grained", "temporal", "classifier")


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for one consumer of randomness."""
    return np.random.default_rng(np.random.SeedSequence([seed, stream]))


class DGDATAModel:
    """
    Feature extractor plus the three CVAE components.

    Args:
        n_channels: Sensor channels per window
        window_length: Samples per window
        label_names: Activity names in label-index order
        cfg: Training configuration (architecture and K are read from it)
        rng: Generator for weight initialisation
    """

    def __init__(
        self,
        n_channels: int,
        window_length: int,
        label_names: Sequence[str],
        cfg: TrainConfig,
        rng: np.random.Generator,
        logging_enabled: bool = False,
    ):
        self.n_channels = n_channels
        self.window_length = window_length
        self.label_names = list(label_names)
        self.config = cfg
        arch = cfg.architecture
        k = cfg.attention.states_per_class
        self.extractor = FeatureExtractor(n_channels, window_length, arch, rng)
        dim = self.extractor.output_dim
        n_classes = len(self.label_names)
        self.fine_grained = FineGrainedComponent(dim, n_classes, k, arch, rng, logging_enabled=logging_enabled)
        self.temporal = TemporalComponent(dim, n_classes, k, arch, rng, logging_enabled=logging_enabled)
        self.classifier = ClassifierComponent(dim, n_classes, k, arch, rng, logging_enabled=logging_enabled)
        self.feature_range = FeatureRange()

    @property
    def modules(self) -> Dict[str, Module]:
        return {
            "extractor": self.extractor,
            "fine_grained": self.fine_grained,
            "temporal": self.temporal,
            "classifier": self.classifier,
        }

    @property
    def n_classes(self) -> int:
        return len(self.label_names)

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Every parameter and buffer, prefixed by its module name."""
        state: Dict[str, np.ndarray] = {}
        for prefix, module in self.modules.items():
            for name, value in module.state_dict().items():
                state[f"{prefix}.{name}"] = value
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """
        Copy a :meth:`state_dict` back into the modules.

        Raises:
            DimensionError: If an entry is missing or has the wrong shape
        """
        for prefix, module in self.modules.items():
            marker = f"{prefix}."
            module.load_state_dict({k[len(marker):]: v for k, v in state.items() if k.startswith(marker)})

    def predict_proba(self, windows: Sequence[UnlabeledWindow]) -> np.ndarray:
        """Class probabilities [n, C] through the extractor and the classifier's latent mean."""
        for window in windows:
            if window.values.shape != (self.n_channels, self.window_length):
                raise DimensionError("window shape does not match the model",
                                     details={"expected": (self.n_channels, self.window_length),
                                              "got": window.values.shape})
        return predict_windows(windows, self.extractor, self.classifier)

    def predict(self, windows: Sequence[UnlabeledWindow]) -> np.ndarray:
        probabilities = self.predict_proba(windows)
        return probabilities.argmax(axis=1) if len(probabilities) else np.zeros(0, dtype=np.int64)


def build_optimizers(model: DGDATAModel, cfg: TrainConfig) -> Dict[str, Adam]:
    """One Adam per component plus one for the shared extractor."""
    return {
        name: Adam(module.named_parameters(), lr=cfg.learning_rate, beta1=cfg.beta1, beta2=cfg.beta2,
                   eps=cfg.adam_eps, weight_decay=cfg.weight_decay)
        for name, module in model.modules.items()
    }


@dataclass
class TrainingState:
    """
    Everything needed to continue a run bit-for-bit.

    Attributes:
        config: Training configuration of the run
        model: Parameters, buffers and the feature range
        optimizers: Adam instances keyed by module name
        pseudo: Current pseudo labels of every training window
        rngs: Generators keyed by consumer ("batching", component names)
        history: Records of completed epochs
        betas: Fitted lag weights per completed epoch
        epoch: Number of completed epochs
    """

    config: TrainConfig
    model: DGDATAModel
    optimizers: Dict[str, Adam]
    pseudo: PseudoLabels
    rngs: Dict[str, np.random.Generator]
    history: TrainHistory = field(default_factory=TrainHistory)
    betas: Dict[int, List[float]] = field(default_factory=dict)
    epoch: int = 0

    @classmethod
    def fresh(
        cls,
        cfg: TrainConfig,
        n_channels: int,
        window_length: int,
        label_names: Sequence[str],
        pseudo: PseudoLabels,
        logging_enabled: bool = False,
    ) -> "TrainingState":
        model = DGDATAModel(n_channels, window_length, label_names, cfg, stream_rng(cfg.seed, STREAM_INIT),
                            logging_enabled=logging_enabled)
        rngs = {"batching": stream_rng(cfg.seed, STREAM_BATCHING)}
        rngs.update({name: stream_rng(cfg.seed, stream) for name, stream in STREAM_SAMPLING.items()})
        return cls(config=cfg, model=model, optimizers=build_optimizers(model, cfg), pseudo=pseudo, rngs=rngs)

    def window_count(self) -> int:
        return int(self.pseudo.states.shape[0])
