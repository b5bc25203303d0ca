"""
Differentiable operations on :class:`~dgdata.nn.tensor.Tensor`.

Every op returns a new tensor whose backward closure maps the upstream
gradient to one gradient per input. Broadcasting is limited to what each op
documents; anything else is a :class:`DimensionError`.
"""
from typing import Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import log_softmax

from dgdata.exceptions import ConfigurationError, DimensionError, LabelError
from dgdata.nn.tensor import Tensor

Operand = Union[Tensor, float]


def _require(condition: bool, message: str, **details) -> None:
    if not condition:
        raise DimensionError(message, details=details)


def add(a: Tensor, b: Operand) -> Tensor:
    """Elementwise sum of two same-shape tensors, or a tensor and a scalar."""
    if isinstance(b, Tensor):
        _require(a.shape == b.shape, "add requires equal shapes", left=a.shape, right=b.shape)
        return Tensor(a.data + b.data, parents=(a, b), backward_fn=lambda g: (g, g), op="add")
    return Tensor(a.data + float(b), parents=(a,), backward_fn=lambda g: (g,), op="add")


def scale(a: Tensor, factor: float) -> Tensor:
    """Multiply every element by a constant."""
    factor = float(factor)
    return Tensor(a.data * factor, parents=(a,), backward_fn=lambda g: (g * factor,), op="scale")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two same-shape tensors."""
    _require(a.shape == b.shape, "mul requires equal shapes", left=a.shape, right=b.shape)
    a_data, b_data = a.data, b.data
    return Tensor(
        a_data * b_data,
        parents=(a, b),
        backward_fn=lambda g: (g * b_data, g * a_data),
        op="mul",
    )


def mean(x: Tensor) -> Tensor:
    """Mean over all elements, as a scalar tensor."""
    size = x.size
    _require(size > 0, "mean of an empty tensor")
    shape = x.shape
    return Tensor(
        x.data.mean(),
        parents=(x,),
        backward_fn=lambda g: (np.full(shape, g / size),),
        op="mean",
    )


def weighted_sum(terms: Sequence[Tensor], weights: Sequence[float]) -> Tensor:
    """
    Compute ``sum(w * t)`` over scalar terms, accumulating left to right.

    Args:
        terms: Scalar loss tensors
        weights: One non-negative weight per term

    Returns:
        Scalar tensor holding the weighted total
    """
    _require(len(terms) == len(weights), "one weight per term required",
             terms=len(terms), weights=len(weights))
    weights = [float(w) for w in weights]
    value = 0.0
    for term, weight in zip(terms, weights):
        _require(term.size == 1, "weighted_sum terms must be scalars", shape=term.shape)
        value += weight * float(term.data)
    return Tensor(
        value,
        parents=tuple(terms),
        backward_fn=lambda g: tuple(g * w for w in weights),
        op="weighted_sum",
    )


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """
    Affine map ``y = xW + b``.

    Args:
        x: Input of shape [n, in]
        weight: Weight of shape [in, out]
        bias: Bias of shape [out]

    Returns:
        Tensor of shape [n, out]

    Raises:
        DimensionError: If the shapes do not conform
    """
    _require(
        x.data.ndim == 2 and weight.data.ndim == 2 and x.shape[1] == weight.shape[0]
        and bias.shape == (weight.shape[1],),
        "linear shape mismatch", x=x.shape, weight=weight.shape, bias=bias.shape,
    )
    x_data, w_data = x.data, weight.data

    def backward_fn(g):
        return g @ w_data.T, x_data.T @ g, g.sum(axis=0)

    return Tensor(x_data @ w_data + bias.data, parents=(x, weight, bias),
                  backward_fn=backward_fn, op="linear")


def conv1d(x: Tensor, kernels: Tensor, bias: Optional[Tensor] = None, stride: int = 1) -> Tensor:
    """
    Valid (unpadded) 1D cross-correlation.

    Args:
        x: Input of shape [n, ch, L]
        kernels: Kernels of shape [co, ch, k]
        bias: Optional bias of shape [co]
        stride: Step between kernel applications

    Returns:
        Tensor of shape [n, co, floor((L - k) / stride) + 1]

    Raises:
        DimensionError: If channels disagree or the kernel is longer than the input
        ConfigurationError: If stride < 1
    """
    if stride < 1:
        raise ConfigurationError("conv1d stride must be >= 1", details={"stride": stride})
    _require(x.data.ndim == 3 and kernels.data.ndim == 3, "conv1d expects 3D input and kernels",
             x=x.shape, kernels=kernels.shape)
    n, channels, length = x.shape
    out_channels, kernel_channels, width = kernels.shape
    _require(channels == kernel_channels, "conv1d channel mismatch", x=x.shape, kernels=kernels.shape)
    _require(width <= length, "conv1d kernel longer than input", kernel=width, length=length)
    if bias is not None:
        _require(bias.shape == (out_channels,), "conv1d bias shape mismatch", bias=bias.shape)

    x_data, k_data = x.data, kernels.data
    windows = sliding_window_view(x_data, width, axis=2)[:, :, ::stride, :]
    out_length = windows.shape[2]
    # [n, L', co] -> [n, co, L']
    out = np.tensordot(windows, k_data, axes=([1, 3], [1, 2])).transpose(0, 2, 1)
    if bias is not None:
        out = out + bias.data[None, :, None]

    def backward_fn(g):
        grad_kernels = np.tensordot(g, windows, axes=([0, 2], [0, 2]))
        grad_x = np.zeros_like(x_data)
        span = stride * (out_length - 1) + 1
        for j in range(width):
            grad_x[:, :, j:j + span:stride] += np.tensordot(g, k_data[:, :, j], axes=([1], [0])).transpose(0, 2, 1)
        grads = [grad_x, grad_kernels]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2)))
        return tuple(grads)

    parents = (x, kernels) if bias is None else (x, kernels, bias)
    return Tensor(out, parents=parents, backward_fn=backward_fn, op="conv1d")


def batchnorm1d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """
    Batch normalization over [n, C] or [n, C, L] inputs.

    In train mode the batch statistics (biased variance) normalize the input
    and update the running statistics in place by exponential moving average.
    In eval mode the running statistics are used.

    Raises:
        ConfigurationError: If a train-mode batch has fewer than two samples
        DimensionError: If parameter shapes do not match the channel count
    """
    _require(x.data.ndim in (2, 3), "batchnorm1d expects [n, C] or [n, C, L]", x=x.shape)
    channels = x.shape[1]
    _require(gamma.shape == (channels,) and beta.shape == (channels,)
             and running_mean.shape == (channels,) and running_var.shape == (channels,),
             "batchnorm1d parameter shape mismatch", channels=channels, gamma=gamma.shape)
    axes = (0,) if x.data.ndim == 2 else (0, 2)
    view = (1, channels) if x.data.ndim == 2 else (1, channels, 1)
    g_data = gamma.data.reshape(view)
    x_data = x.data

    if training:
        if x.shape[0] < 2:
            raise ConfigurationError("batchnorm1d needs a batch of at least 2 in train mode",
                                     details={"batch": x.shape[0]})
        count = x_data.size // channels
        mu = x_data.mean(axis=axes, keepdims=True)
        var = x_data.var(axis=axes, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + eps)
        x_hat = (x_data - mu) * inv_std
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu.reshape(channels)
        running_var *= 1.0 - momentum
        running_var += momentum * var.reshape(channels)

        def backward_fn(g):
            d_hat = g * g_data
            grad_x = (inv_std / count) * (
                count * d_hat
                - d_hat.sum(axis=axes, keepdims=True)
                - x_hat * (d_hat * x_hat).sum(axis=axes, keepdims=True)
            )
            return grad_x, (g * x_hat).sum(axis=axes), g.sum(axis=axes)
    else:
        inv_std = 1.0 / np.sqrt(running_var.reshape(view) + eps)
        x_hat = (x_data - running_mean.reshape(view)) * inv_std

        def backward_fn(g):
            return g * g_data * inv_std, (g * x_hat).sum(axis=axes), g.sum(axis=axes)

    out = x_hat * g_data + beta.data.reshape(view)
    return Tensor(out, parents=(x, gamma, beta), backward_fn=backward_fn, op="batchnorm1d")


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x); the subgradient at 0 is 0."""
    mask = x.data > 0
    return Tensor(np.where(mask, x.data, 0.0), parents=(x,),
                  backward_fn=lambda g: (g * mask,), op="relu")


def sigmoid(x: Tensor) -> Tensor:
    """Elementwise logistic function, stable for large |x|."""
    e = np.exp(-np.abs(x.data))
    out = np.where(x.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return Tensor(out, parents=(x,), backward_fn=lambda g: (g * out * (1.0 - out),), op="sigmoid")


def maxpool1d(x: Tensor, width: int, stride: int) -> Tensor:
    """
    Max pooling over the last axis of a [n, ch, L] tensor.

    The gradient routes to the first maximal index of every window.
    """
    _require(x.data.ndim == 3, "maxpool1d expects [n, ch, L]", x=x.shape)
    _require(1 <= width <= x.shape[2], "maxpool1d width exceeds input length",
             width=width, length=x.shape[2])
    if stride < 1:
        raise ConfigurationError("maxpool1d stride must be >= 1", details={"stride": stride})
    x_data = x.data
    windows = sliding_window_view(x_data, width, axis=2)[:, :, ::stride, :]
    arg = windows.argmax(axis=3)
    out = np.take_along_axis(windows, arg[..., None], axis=3)[..., 0]
    out_length = out.shape[2]

    def backward_fn(g):
        grad_x = np.zeros_like(x_data)
        span = stride * (out_length - 1) + 1
        for j in range(width):
            grad_x[:, :, j:j + span:stride] += g * (arg == j)
        return (grad_x,)

    return Tensor(out, parents=(x,), backward_fn=backward_fn, op="maxpool1d")


def flatten(x: Tensor) -> Tensor:
    """Collapse all but the leading axis."""
    shape = x.shape
    return Tensor(x.data.reshape(shape[0], -1), parents=(x,),
                  backward_fn=lambda g: (g.reshape(shape),), op="flatten")


def take_rows(x: Tensor, rows: np.ndarray) -> Tensor:
    """Select rows of a batch-major tensor by index."""
    rows = np.asarray(rows, dtype=np.int64)
    shape = x.shape

    def backward_fn(g):
        grad_x = np.zeros(shape)
        np.add.at(grad_x, rows, g)
        return (grad_x,)

    return Tensor(x.data[rows], parents=(x,), backward_fn=backward_fn, op="take_rows")


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """
    Mean negative log-likelihood of integer labels under softmax(logits).

    Args:
        logits: Tensor of shape [n, C]
        labels: Integer array of shape [n] with values in [0, C)

    Raises:
        DimensionError: If shapes do not conform or the batch is empty
        LabelError: If a label is out of range
    """
    labels = np.asarray(labels, dtype=np.int64)
    _require(logits.data.ndim == 2 and labels.shape == (logits.shape[0],) and logits.shape[0] > 0,
             "softmax_cross_entropy shape mismatch", logits=logits.shape, labels=labels.shape)
    n, classes = logits.shape
    if labels.min() < 0 or labels.max() >= classes:
        raise LabelError("label out of range", details={"classes": classes,
                                                        "min": int(labels.min()),
                                                        "max": int(labels.max())})
    log_probs = log_softmax(logits.data, axis=1)
    rows = np.arange(n)
    value = -log_probs[rows, labels].mean()

    def backward_fn(g):
        grad = np.exp(log_probs)
        grad[rows, labels] -= 1.0
        return (g * grad / n,)

    return Tensor(value, parents=(logits,), backward_fn=backward_fn, op="softmax_cross_entropy")


def mse(a: Tensor, b: Union[Tensor, np.ndarray, float]) -> Tensor:
    """
    Mean squared difference between ``a`` and ``b``.

    ``b`` may be a tensor, an array of the same shape, or a scalar standing
    for a constant tensor of that value.
    """
    if isinstance(b, Tensor):
        b_data = b.data
    elif np.ndim(b) == 0:
        b_data = np.full(a.shape, float(b))
    else:
        b_data = np.asarray(b, dtype=np.float64)
    _require(a.shape == b_data.shape, "mse shape mismatch", left=a.shape, right=b_data.shape)
    _require(a.size > 0, "mse of empty tensors")
    diff = a.data - b_data
    size = diff.size

    def backward_fn(g):
        grad = g * 2.0 * diff / size
        return (grad, -grad) if isinstance(b, Tensor) else (grad,)

    parents = (a, b) if isinstance(b, Tensor) else (a,)
    return Tensor(np.mean(diff * diff), parents=parents, backward_fn=backward_fn, op="mse")


def gaussian_kl_to_var(logvar: Tensor, var_target: float) -> Tensor:
    """
    KL divergence from N(0, sigma^2) to N(0, var_target), averaged over elements.

    Computes ``0.5 * (s / v - 1 - ln(s / v))`` with ``s = exp(logvar)``. The
    mean penalty is a separate ``mse(mean, 0)`` term.

    Raises:
        ConfigurationError: If var_target <= 0
    """
    if not var_target > 0:
        raise ConfigurationError("var_target must be positive", details={"var_target": var_target})
    _require(logvar.size > 0, "gaussian_kl_to_var of an empty tensor")
    ratio = np.exp(logvar.data) / var_target
    value = np.mean(0.5 * (ratio - 1.0 - (logvar.data - np.log(var_target))))
    size = logvar.size
    return Tensor(value, parents=(logvar,),
                  backward_fn=lambda g: (g * 0.5 * (ratio - 1.0) / size,),
                  op="gaussian_kl_to_var")


def reparam_sample(mean: Tensor, logvar: Tensor, rng: np.random.Generator) -> Tensor:
    """
    Draw ``z = mean + exp(0.5 * logvar) * eps`` with ``eps ~ N(0, 1)``.

    Gradients flow to ``mean`` and ``logvar``; the noise is a constant.
    """
    _require(mean.shape == logvar.shape, "reparam_sample shape mismatch",
             mean=mean.shape, logvar=logvar.shape)
    noise = rng.standard_normal(mean.shape)
    std = np.exp(0.5 * logvar.data)
    return Tensor(mean.data + std * noise, parents=(mean, logvar),
                  backward_fn=lambda g: (g, g * noise * 0.5 * std), op="reparam_sample")


def grad_reverse(x: Tensor, lambda_: float) -> Tensor:
    """
    Gradient reversal: identity forward, ``-lambda_ * upstream`` backward.

    Raises:
        ConfigurationError: If lambda_ < 0
    """
    if lambda_ < 0:
        raise ConfigurationError("gradient reversal lambda must be >= 0", details={"lambda": lambda_})
    factor = -float(lambda_)
    return Tensor(x.data, parents=(x,), backward_fn=lambda g: (g * factor,), op="grad_reverse")


def squash(x: Tensor, lower: np.ndarray, upper: np.ndarray) -> Tensor:
    """
    Map [n, D] features into [0, 1] by per-dimension min/max scaling.

    Values outside [lower, upper] are clipped (zero gradient); dimensions of
    zero width map to 0.5.
    """
    _require(x.data.ndim == 2 and lower.shape == (x.shape[1],) and upper.shape == (x.shape[1],),
             "squash range shape mismatch", x=x.shape, lower=lower.shape)
    width = upper - lower
    flat = width <= 0
    safe = np.where(flat, 1.0, width)
    raw = (x.data - lower) / safe
    out = np.clip(raw, 0.0, 1.0)
    out[:, flat] = 0.5
    passes = (raw >= 0.0) & (raw <= 1.0) & ~flat
    return Tensor(out, parents=(x,), backward_fn=lambda g: (g * passes / safe,), op="squash")
