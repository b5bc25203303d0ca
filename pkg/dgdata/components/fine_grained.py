"""
Fine-grained features under the pseudo class-state constraint.
"""
from typing import Dict, Optional

import numpy as np

from dgdata.components.base import BaseComponent, ComponentBatch, ComponentLoss, masked_cross_entropy
from dgdata.models.config import LossWeights
from dgdata.models.labels import PseudoLabels
from dgdata.nn import functional as F
from dgdata.nn.module import Module


class FineGrainedComponent(BaseComponent):
    """
    CVAE whose latent must predict the composite class-state label and the domain.

    Both constraint heads are single linear maps fed the sampled latent
    directly; this component plays the discriminator role.
    """

    name = "fine_grained"

    def _build_heads(self, rng: np.random.Generator) -> Dict[str, Module]:
        return {
            "class_state": self._simple_head(self.n_classes * self.states_per_class, rng),
            "domain": self._simple_head(2, rng),
        }

    def loss_fine_grained(
        self,
        batch: ComponentBatch,
        weights: LossWeights,
        pseudo: Optional[PseudoLabels],
        rng: np.random.Generator,
    ) -> ComponentLoss:
        """
        Assemble ``alpha*recon + zeta*mean_variance + gamma*class_state + delta*domain``.

        Windows without a known class (target windows during warm-up) are
        left out of the class-state term.

        Raises:
            StateError: If pseudo labels are missing
        """
        pseudo = self._require_pseudo(pseudo, self.name)
        vae = self._vae_terms(batch, weights, rng)
        z = vae["z"]
        composite = pseudo.composite[batch.window_index]
        terms = {
            "recon": vae["recon"],
            "mean_variance": vae["mean_variance"],
            "class_state": masked_cross_entropy(self.head_logits(z, "class_state"), composite),
            "domain": F.softmax_cross_entropy(self.head_logits(z, "domain"), batch.domains),
        }
        return self._assemble(terms, {"recon": weights.alpha, "mean_variance": weights.zeta,
                                      "class_state": weights.gamma, "domain": weights.delta})

    def loss(self, batch, weights, pseudo, rng, grl_lambda=1.0) -> ComponentLoss:
        return self.loss_fine_grained(batch, weights, pseudo, rng)
