"""
The activity classifier and the target inference path.
"""
import logging
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import softmax

from dgdata.components.base import BaseComponent, ComponentBatch, ComponentLoss
from dgdata.components.feature_extractor import FeatureExtractor
from dgdata.exceptions import BatchCompositionError
from dgdata.models.config import LossWeights
from dgdata.models.data import UnlabeledWindow
from dgdata.models.labels import PseudoLabels
from dgdata.nn import functional as F
from dgdata.nn.module import Module
from dgdata.nn.tensor import Tensor

logger = logging.getLogger("dgdata")


class ClassifierComponent(BaseComponent):
    """
    CVAE whose latent classifies source activities while hiding the domain.

    The domain head sees the latent through gradient reversal whose
    strength follows the training schedule.
    """

    name = "classifier"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.trained = False

    def _build_heads(self, rng: np.random.Generator) -> Dict[str, Module]:
        return {
            "source_class": self._simple_head(self.n_classes, rng),
            "domain": self._adversarial_head(2, rng),
            "temporal_state": self._simple_head(self.states_per_class, rng),
        }

    def loss_classifier(
        self,
        batch: ComponentBatch,
        weights: LossWeights,
        pseudo: Optional[PseudoLabels],
        rng: np.random.Generator,
        grl_lambda: float,
    ) -> ComponentLoss:
        """
        Assemble ``alpha*recon + zeta*mean_variance + gamma*source_class + delta*domain + eta*temporal_state``.

        The source-class term only reads source rows.

        Raises:
            BatchCompositionError: If the batch holds no source windows
            StateError: If pseudo labels are missing
        """
        pseudo = self._require_pseudo(pseudo, self.name)
        source_rows = np.flatnonzero(batch.domains == 0)
        if source_rows.size == 0:
            raise BatchCompositionError("classifier batch has no source windows",
                                        details={"batch": batch.size})
        vae = self._vae_terms(batch, weights, rng)
        z = vae["z"]
        class_logits = F.take_rows(self.head_logits(z, "source_class"), source_rows)
        terms = {
            "recon": vae["recon"],
            "mean_variance": vae["mean_variance"],
            "source_class": F.softmax_cross_entropy(class_logits, batch.source_labels[source_rows]),
            "domain": F.softmax_cross_entropy(self.head_logits(z, "domain", grl_lambda), batch.domains),
            "temporal_state": F.softmax_cross_entropy(self.head_logits(z, "temporal_state"),
                                                      pseudo.states[batch.window_index]),
        }
        return self._assemble(terms, {"recon": weights.alpha, "mean_variance": weights.zeta,
                                      "source_class": weights.gamma, "domain": weights.delta,
                                      "temporal_state": weights.eta})

    def loss(self, batch, weights, pseudo, rng, grl_lambda=1.0) -> ComponentLoss:
        return self.loss_classifier(batch, weights, pseudo, rng, grl_lambda)

    def predict_proba(self, features: Tensor) -> np.ndarray:
        """Class probabilities from the latent mean; no sampling, no graph."""
        with self.inference():
            mean = self.encode(features.detach()).mean
            logits = self.head_logits(mean, "source_class")
        return softmax(logits.data, axis=1)


def predict_windows(
    windows: Sequence[UnlabeledWindow],
    extractor: FeatureExtractor,
    classifier: ClassifierComponent,
    batch_size: int = 256,
) -> np.ndarray:
    """Class probabilities [n, C] for many windows."""
    if not classifier.trained:
        logger.warning("Classifying with an untrained classifier component")
    features = extractor.embed(windows, batch_size=batch_size)
    if features.shape[0] == 0:
        return np.zeros((0, classifier.n_classes))
    return classifier.predict_proba(Tensor(features))


def classify_target(
    window: UnlabeledWindow,
    extractor: FeatureExtractor,
    classifier: ClassifierComponent,
) -> Tuple[int, np.ndarray]:
    """
    Predict the activity of one window.

    Returns:
        The argmax label and the class probabilities
    """
    probabilities = predict_windows([window], extractor, classifier)[0]
    return int(np.argmax(probabilities)), probabilities
