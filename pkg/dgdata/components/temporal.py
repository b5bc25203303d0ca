"""
Temporal characterization with adversarial class and domain heads.
"""
from typing import Dict, Optional

import numpy as np

from dgdata.components.base import BaseComponent, ComponentBatch, ComponentLoss, masked_cross_entropy
from dgdata.models.config import LossWeights
from dgdata.models.labels import PseudoLabels
from dgdata.nn import functional as F
from dgdata.nn.module import Module


class TemporalComponent(BaseComponent):
    """
    CVAE whose latent predicts the temporal state while hiding class and domain.

    The class and domain heads see the latent through gradient reversal;
    the temporal-state head sees it directly.
    """

    name = "temporal"

    def _build_heads(self, rng: np.random.Generator) -> Dict[str, Module]:
        return {
            "temporal_state": self._simple_head(self.states_per_class, rng),
            "class": self._adversarial_head(self.n_classes, rng),
            "domain": self._adversarial_head(2, rng),
        }

    def loss_temporal(
        self,
        batch: ComponentBatch,
        weights: LossWeights,
        pseudo: Optional[PseudoLabels],
        rng: np.random.Generator,
        grl_lambda: float = 1.0,
    ) -> ComponentLoss:
        """
        Assemble ``alpha*recon + zeta*mean_variance + gamma*class + delta*domain + eta*temporal_state``.

        Args:
            batch: Domain-mixed minibatch
            weights: Loss coefficients
            pseudo: Current class and temporal-state labels
            rng: Generator for the latent sample
            grl_lambda: Reversal strength of the class and domain heads

        Raises:
            StateError: If pseudo labels are missing
        """
        pseudo = self._require_pseudo(pseudo, self.name)
        vae = self._vae_terms(batch, weights, rng)
        z = vae["z"]
        classes = pseudo.classes[batch.window_index]
        states = pseudo.states[batch.window_index]
        terms = {
            "recon": vae["recon"],
            "mean_variance": vae["mean_variance"],
            "class": masked_cross_entropy(self.head_logits(z, "class", grl_lambda), classes),
            "domain": F.softmax_cross_entropy(self.head_logits(z, "domain", grl_lambda), batch.domains),
            "temporal_state": F.softmax_cross_entropy(self.head_logits(z, "temporal_state"), states),
        }
        return self._assemble(terms, {"recon": weights.alpha, "mean_variance": weights.zeta,
                                      "class": weights.gamma, "domain": weights.delta,
                                      "temporal_state": weights.eta})

    def loss(self, batch, weights, pseudo, rng, grl_lambda=1.0) -> ComponentLoss:
        return self.loss_temporal(batch, weights, pseudo, rng, grl_lambda)
