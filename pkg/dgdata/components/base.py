"""
Base component module providing the conditional-VAE block shared by all three components.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from dgdata.exceptions import DimensionError, StateError
from dgdata.models.config import ArchitectureConfig, LossWeights
from dgdata.models.history import LossBreakdown
from dgdata.models.labels import PseudoLabels
from dgdata.nn import functional as F
from dgdata.nn.module import BatchNorm1d, Linear, Module, ReLU, Sequential, Sigmoid
from dgdata.nn.tensor import Tensor

# Set up logging
logger = logging.getLogger("dgdata")

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def configure_logging(enabled: bool) -> None:
    """Attach a stream handler to the ``dgdata`` logger once, when logging is enabled."""
    if enabled and not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(handler)
        logger.setLevel(logging.INFO)


@dataclass
class LatentGaussian:
    """
    Per-sample latent Gaussian emitted by an encoder.

    Attributes:
        mean: Tensor [n, Z]
        logvar: Tensor [n, Z]
    """

    mean: Tensor
    logvar: Tensor


@dataclass
class ComponentBatch:
    """
    One domain-mixed minibatch as seen by a component.

    Attributes:
        features: Extractor output h_f(x), [n, D], attached to the extractor graph
        target: Reconstruction target squash(h_f(x)), [n, D]
        domains: 0 for source rows, 1 for target rows
        window_index: Row of every window in the pseudo-label arrays
        source_labels: True activity for source rows, -1 for target rows
    """

    features: Tensor
    target: Tensor
    domains: np.ndarray
    window_index: np.ndarray
    source_labels: np.ndarray

    @property
    def size(self) -> int:
        return int(self.domains.shape[0])


@dataclass
class ComponentLoss:
    """Differentiable total plus the per-term breakdown it was assembled from."""

    total: Tensor
    breakdown: LossBreakdown


def masked_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """
    Cross-entropy over the rows whose label is >= 0.

    Returns a constant zero when no row is labelled, so warm-up batches
    contribute nothing through that term.
    """
    labels = np.asarray(labels, dtype=np.int64)
    rows = np.flatnonzero(labels >= 0)
    if rows.size == 0:
        return Tensor(0.0)
    if rows.size == labels.size:
        return F.softmax_cross_entropy(logits, labels)
    return F.softmax_cross_entropy(F.take_rows(logits, rows), labels[rows])


class BaseComponent(Module):
    """
    Base class for the three DGDATA components providing the CVAE block.

    Each component owns an encoder (mean and log-variance heads of two
    linear layers), a decoder ending in a sigmoid, and a set of named
    constraint heads declared by the subclass.
    """

    name = "component"

    def __init__(
        self,
        feature_dim: int,
        n_classes: int,
        states_per_class: int,
        arch: ArchitectureConfig,
        rng: np.random.Generator,
        logging_enabled: bool = False,
    ):
        """
        Initialize a new component.

        Args:
            feature_dim: Length D of the extractor output
            n_classes: Activity classes C
            states_per_class: Temporal states K per class
            arch: Layer sizes
            rng: Generator used for weight initialisation
            logging_enabled: Whether to enable logging
        """
        super().__init__()
        self.feature_dim = feature_dim
        self.n_classes = n_classes
        self.states_per_class = states_per_class
        self.latent_dim = arch.latent_dim
        self._arch = arch
        self._logging_enabled = logging_enabled
        configure_logging(logging_enabled)

        hidden = arch.hidden_dim
        self.encoder_mean = Sequential(Linear(feature_dim, hidden, rng), ReLU(), Linear(hidden, arch.latent_dim, rng))
        self.encoder_logvar = Sequential(Linear(feature_dim, hidden, rng), ReLU(),
                                         Linear(hidden, arch.latent_dim, rng))
        self.decoder = Sequential(Linear(arch.latent_dim, hidden, rng), ReLU(), Linear(hidden, feature_dim, rng),
                                  Sigmoid())
        self.heads: Dict[str, Module] = self._build_heads(rng)

    def _build_heads(self, rng: np.random.Generator) -> Dict[str, Module]:
        raise NotImplementedError

    def _simple_head(self, out_features: int, rng: np.random.Generator) -> Module:
        return Linear(self.latent_dim, out_features, rng)

    def _adversarial_head(self, out_features: int, rng: np.random.Generator) -> Module:
        hidden = self._arch.adversarial_hidden_dim
        momentum, eps = self._arch.bn_momentum, self._arch.bn_eps
        return Sequential(
            Linear(self.latent_dim, hidden, rng), BatchNorm1d(hidden, momentum, eps), ReLU(),
            Linear(hidden, hidden, rng), BatchNorm1d(hidden, momentum, eps), ReLU(),
            Linear(hidden, out_features, rng),
        )

    def encode(self, features: Tensor) -> LatentGaussian:
        """
        Evaluate both encoder heads on the same features.

        Raises:
            DimensionError: If the feature width differs from the encoder input
        """
        if features.data.ndim != 2 or features.shape[1] != self.feature_dim:
            raise DimensionError("feature width does not match the encoder",
                                 details={"component": self.name, "expected": self.feature_dim,
                                          "got": features.shape})
        return LatentGaussian(mean=self.encoder_mean(features), logvar=self.encoder_logvar(features))

    def decode(self, z: Tensor) -> Tensor:
        """Reconstruction in (0, 1)^D."""
        if z.data.ndim != 2 or z.shape[1] != self.latent_dim:
            raise DimensionError("latent width does not match the decoder",
                                 details={"component": self.name, "expected": self.latent_dim, "got": z.shape})
        return self.decoder(z)

    def head_logits(self, z: Tensor, head: str, grl_lambda: Optional[float] = None) -> Tensor:
        """
        Pre-softmax logits of a constraint head.

        Args:
            z: Latent batch [n, Z]
            head: Head name
            grl_lambda: Reverse gradients with this strength before the head; None feeds z directly

        Raises:
            DimensionError: If the head does not exist or z has the wrong width
        """
        if head not in self.heads:
            raise DimensionError("unknown head", details={"component": self.name, "head": head,
                                                          "available": sorted(self.heads)})
        if z.data.ndim != 2 or z.shape[1] != self.latent_dim:
            raise DimensionError("latent width does not match the head",
                                 details={"component": self.name, "head": head, "got": z.shape})
        if grl_lambda is not None:
            z = F.grad_reverse(z, grl_lambda)
        return self.heads[head](z)  # type: ignore[operator]

    def _vae_terms(
        self, batch: ComponentBatch, weights: LossWeights, rng: np.random.Generator
    ) -> Dict[str, Tensor]:
        """Reconstruction and mean-variance terms plus the sampled latent under key ``z``."""
        latent = self.encode(batch.features)
        z = F.reparam_sample(latent.mean, latent.logvar, rng)
        recon = F.mse(self.decode(z), batch.target)
        mean_variance = F.add(F.mse(latent.mean, 0.0), F.gaussian_kl_to_var(latent.logvar, weights.var_target))
        return {"z": z, "recon": recon, "mean_variance": mean_variance}

    @staticmethod
    def _require_pseudo(pseudo: Optional[PseudoLabels], component: str) -> PseudoLabels:
        if pseudo is None:
            raise StateError("pseudo labels are required", details={"component": component})
        return pseudo

    def _assemble(self, terms: Dict[str, Tensor], weights: Dict[str, float]) -> ComponentLoss:
        total = F.weighted_sum(list(terms.values()), list(weights.values()))
        breakdown = LossBreakdown(
            component=self.name,
            terms={name: term.item() for name, term in terms.items()},
            weights=dict(weights),
            total=total.item(),
        )
        if self._logging_enabled:
            logger.debug("%s batch loss %.6f", self.name, breakdown.total)
        return ComponentLoss(total=total, breakdown=breakdown)

    def loss(
        self,
        batch: ComponentBatch,
        weights: LossWeights,
        pseudo: Optional[PseudoLabels],
        rng: np.random.Generator,
        grl_lambda: float = 1.0,
    ) -> ComponentLoss:
        """Total loss of this component on one batch."""
        raise NotImplementedError
