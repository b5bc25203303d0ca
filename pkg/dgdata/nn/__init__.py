"""
Differentiable computation substrate: tensors, ops, layers and Adam.
"""

from dgdata.nn.tensor import ComputationRecord, Tensor, backward, parameter
from dgdata.nn.module import (
    BatchNorm1d,
    Conv1d,
    Flatten,
    Linear,
    MaxPool1d,
    Module,
    ReLU,
    Sequential,
    Sigmoid,
)
from dgdata.nn.optim import Adam, AdamState, adam_step

__all__ = [
    "Tensor",
    "ComputationRecord",
    "backward",
    "parameter",
    "Module",
    "Linear",
    "Conv1d",
    "BatchNorm1d",
    "ReLU",
    "Sigmoid",
    "MaxPool1d",
    "Flatten",
    "Sequential",
    "Adam",
    "AdamState",
    "adam_step",
]
