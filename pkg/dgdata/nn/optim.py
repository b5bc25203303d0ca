"""
Adam with bias correction and decoupled weight decay.
"""
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from dgdata.exceptions import ConfigurationError, DimensionError
from dgdata.nn.tensor import Tensor


@dataclass
class AdamState:
    """
    Per-parameter moment accumulators and the shared step counter.

    Attributes:
        m: First-moment estimates keyed by parameter name
        v: Second-moment estimates keyed by parameter name
        step: Number of completed updates
    """

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.2,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 5e-4,
) -> AdamState:
    """
    Apply one bias-corrected Adam update in place.

    Parameters missing from ``grads`` are left untouched. Weight decay is
    decoupled: ``p -= lr * weight_decay * p`` before the adaptive step.

    Args:
        params: Parameter arrays keyed by name (updated in place)
        grads: Gradients keyed by name
        state: Moment accumulators (updated in place)
        lr: Learning rate
        beta1: First-moment decay
        beta2: Second-moment decay
        eps: Denominator guard
        weight_decay: Decoupled weight-decay coefficient

    Returns:
        The updated state

    Raises:
        ConfigurationError: If a hyperparameter is out of range
        DimensionError: If a gradient shape differs from its parameter
    """
    if lr <= 0 or not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0 or eps <= 0 or weight_decay < 0:
        raise ConfigurationError("invalid Adam hyperparameters",
                                 details={"lr": lr, "beta1": beta1, "beta2": beta2,
                                          "eps": eps, "weight_decay": weight_decay})
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for name, value in params.items():
        grad = grads.get(name)
        if grad is None:
            continue
        if grad.shape != value.shape:
            raise DimensionError("gradient shape differs from parameter",
                                 details={"name": name, "param": value.shape, "grad": grad.shape})
        if name not in state.m:
            state.m[name] = np.zeros_like(value)
            state.v[name] = np.zeros_like(value)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * (grad * grad)
        if weight_decay:
            value -= lr * weight_decay * value
        value -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
    return state


class Adam:
    """Adam optimizer over a named set of parameter tensors."""

    def __init__(
        self,
        params: Dict[str, Tensor],
        lr: float = 1e-3,
        beta1: float = 0.2,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 5e-4,
        state: Optional[AdamState] = None,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = state or AdamState()

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.zero_grad()

    def step(self) -> None:
        grads = {name: p.grad for name, p in self.params.items() if p.grad is not None}
        adam_step({name: p.data for name, p in self.params.items()}, grads, self.state,
                  lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps,
                  weight_decay=self.weight_decay)
