"""
DGDATA: cross-user activity recognition with adversarial conditional VAEs and temporal relation attention.
"""

from dgdata.exceptions import (
    DGDATAError,
    BatchCompositionError,
    CheckpointError,
    ConfigurationError,
    DataError,
    DimensionError,
    DivergenceError,
    IncompatibleCheckpointError,
    IntegrityError,
    LabelError,
    NonFiniteError,
    ReportError,
    SchemaError,
    StateError,
    UsageError,
)
from dgdata.model import DGDATAModel, TrainingState
from dgdata.trainer import DGDATATrainer, grl_lambda, train
from dgdata.checkpoint import load_checkpoint, save_checkpoint
from dgdata.evaluation import confusion_matrix, evaluate, report, source_only_baseline

__all__ = [
    "DGDATAModel",
    "TrainingState",
    "DGDATATrainer",
    "grl_lambda",
    "train",
    "load_checkpoint",
    "save_checkpoint",
    "confusion_matrix",
    "evaluate",
    "report",
    "source_only_baseline",
    "DGDATAError",
    "BatchCompositionError",
    "CheckpointError",
    "ConfigurationError",
    "DataError",
    "DimensionError",
    "DivergenceError",
    "IncompatibleCheckpointError",
    "IntegrityError",
    "LabelError",
    "NonFiniteError",
    "ReportError",
    "SchemaError",
    "StateError",
    "UsageError",
]

__version__ = "0.1.0"
