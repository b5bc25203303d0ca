"""
Exceptions for the DGDATA domain-adaptation pipeline.
"""
from typing import Any, Dict, Optional


class DGDATAError(Exception):
    """Base exception for all DGDATA errors."""

    exit_code: int = 1

    def __init__(
        self,
        message: str = "An error occurred",
        details: Optional[Dict[str, Any]] = None,
        exit_code: Optional[int] = None,
    ):
        """
        Initialize a new DGDATAError.

        Args:
            message: Error message
            details: Structured context (shapes, labels, paths) for diagnostics
            exit_code: Process exit code used by the CLI (defaults to the class code)
        """
        self.message = message
        self.details = details or {}
        if exit_code is not None:
            self.exit_code = exit_code
        super().__init__(self.message)

    def __str__(self) -> str:
        """Return a string representation of the error."""
        parts = [self.message]
        for key, value in self.details.items():
            if value is not None:
                parts.append(f"{key}: {value}")
        return " | ".join(parts)


class ConfigurationError(DGDATAError):
    """Raised when a configuration value or hyperparameter is invalid."""
    exit_code = 2


class DimensionError(DGDATAError):
    """Raised when tensor or window shapes do not conform."""
    exit_code = 2


class LabelError(DGDATAError):
    """Raised when a class, state or composite label is out of range."""
    exit_code = 2


class UsageError(DGDATAError):
    """Raised when the gradient machinery is used incorrectly."""
    exit_code = 2


class StateError(DGDATAError):
    """Raised when training state (e.g. pseudo labels) is missing."""
    exit_code = 2


class BatchCompositionError(DGDATAError):
    """Raised when a minibatch lacks the windows a loss term needs."""
    exit_code = 2


class DataError(DGDATAError):
    """Raised when input data is empty, too short or otherwise unusable."""
    exit_code = 3


class SchemaError(DataError):
    """Raised when a dataset file does not match its declared schema."""
    pass


class NonFiniteError(DGDATAError):
    """Raised when a forward op produces NaN or Inf values."""
    exit_code = 4


class DivergenceError(DGDATAError):
    """Raised when training produces a non-finite loss."""
    exit_code = 4


class CheckpointError(DGDATAError):
    """Base class for checkpoint failures."""
    pass


class IntegrityError(CheckpointError):
    """Raised when a checkpoint file is corrupt or truncated."""
    pass


class IncompatibleCheckpointError(CheckpointError):
    """Raised when a checkpoint was written by an unsupported format version."""
    pass


class ReportError(DGDATAError):
    """Raised when report files cannot be written."""
    pass
