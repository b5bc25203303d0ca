"""
Parameter containers and the layers the DGDATA networks are built from.
"""
import math
from contextlib import contextmanager
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from dgdata.exceptions import DimensionError
from dgdata.nn import functional as F
from dgdata.nn.tensor import Tensor, parameter


class Module:
    """
    Base class for anything that owns parameters or buffers.

    Parameters are trainable leaf tensors; buffers are plain arrays updated
    outside of gradient descent (batch-norm running statistics). Both are
    discovered from instance attributes in definition order, recursing into
    child modules and lists/dicts of modules, so names are deterministic.
    """

    def __init__(self):
        self.training = True

    def _children(self) -> Iterator[Tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item
            elif isinstance(value, dict):
                for key, item in value.items():
                    if isinstance(item, Module):
                        yield f"{name}.{key}", item

    def named_parameters(self, prefix: str = "") -> Dict[str, Tensor]:
        params: Dict[str, Tensor] = {}
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                params[prefix + name] = value
        for name, child in self._children():
            params.update(child.named_parameters(f"{prefix}{name}."))
        return params

    def named_buffers(self, prefix: str = "") -> Dict[str, np.ndarray]:
        buffers: Dict[str, np.ndarray] = {}
        for name in getattr(self, "_buffer_names", ()):
            buffers[prefix + name] = getattr(self, name)
        for name, child in self._children():
            buffers.update(child.named_buffers(f"{prefix}{name}."))
        return buffers

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self._children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    @contextmanager
    def inference(self) -> Iterator["Module"]:
        """Switch to eval mode for the duration of the block, then restore the previous mode."""
        previous = self.training
        self.eval()
        try:
            yield self
        finally:
            self.train(previous)

    def zero_grad(self) -> None:
        for param in self.named_parameters().values():
            param.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Copies of every parameter and buffer, keyed by dotted name."""
        state = {name: p.data.copy() for name, p in self.named_parameters().items()}
        state.update({name: b.copy() for name, b in self.named_buffers().items()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """
        Copy values into the existing parameters and buffers in place.

        Raises:
            DimensionError: If a name is missing or a shape differs
        """
        targets: Dict[str, np.ndarray] = {n: p.data for n, p in self.named_parameters().items()}
        targets.update(self.named_buffers())
        missing = sorted(set(targets) - set(state))
        if missing:
            raise DimensionError("state is missing entries", details={"missing": missing[:5]})
        for name, target in targets.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != target.shape:
                raise DimensionError("state entry has the wrong shape",
                                     details={"name": name, "expected": target.shape, "got": value.shape})
            target[...] = value


def _uniform(rng: np.random.Generator, bound: float, shape: Tuple[int, ...]) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    """Fully connected layer ``y = xW + b`` with fan-in uniform initialisation."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        super().__init__()
        bound = 1.0 / math.sqrt(in_features)
        self.weight = parameter(_uniform(rng, bound, (in_features, out_features)))
        self.bias = parameter(_uniform(rng, bound, (out_features,)))

    def __call__(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class Conv1d(Module):
    """Valid 1D convolution layer with bias."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator, stride: int = 1):
        super().__init__()
        bound = 1.0 / math.sqrt(in_channels * kernel_size)
        self.kernels = parameter(_uniform(rng, bound, (out_channels, in_channels, kernel_size)))
        self.bias = parameter(_uniform(rng, bound, (out_channels,)))
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        return F.conv1d(x, self.kernels, self.bias, stride=self.stride)


class BatchNorm1d(Module):
    """Batch normalization with affine parameters and running statistics."""

    _buffer_names = ("running_mean", "running_var")

    def __init__(self, num_features: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.gamma = parameter(np.ones(num_features))
        self.beta = parameter(np.zeros(num_features))
        self.running_mean = np.zeros(num_features)
        self.running_var = np.ones(num_features)
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return F.batchnorm1d(x, self.gamma, self.beta, self.running_mean, self.running_var,
                             training=self.training, momentum=self.momentum, eps=self.eps)


class ReLU(Module):
    def __call__(self, x: Tensor) -> Tensor:
        return F.relu(x)


class Sigmoid(Module):
    def __call__(self, x: Tensor) -> Tensor:
        return F.sigmoid(x)


class MaxPool1d(Module):
    def __init__(self, width: int, stride: Optional[int] = None):
        super().__init__()
        self.width = width
        self.stride = stride or width

    def __call__(self, x: Tensor) -> Tensor:
        return F.maxpool1d(x, self.width, self.stride)


class Flatten(Module):
    def __call__(self, x: Tensor) -> Tensor:
        return F.flatten(x)


class Sequential(Module):
    """Apply child modules in order."""

    def __init__(self, *layers: Module):
        super().__init__()
        self.layers: List[Module] = list(layers)

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)  # type: ignore[operator]
        return x
