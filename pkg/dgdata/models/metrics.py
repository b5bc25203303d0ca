"""
Evaluation metrics and the run manifest.
"""
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, model_validator


class ConfusionMatrix(BaseModel):
    """
    True-by-predicted counts.

    Attributes:
        counts: counts[true][predicted]
        label_names: Activity names in row/column order
    """

    counts: List[List[int]]
    label_names: List[str]

    @model_validator(mode="after")
    def _square_and_nonnegative(self) -> "ConfusionMatrix":
        size = len(self.label_names)
        if len(self.counts) != size or any(len(row) != size for row in self.counts):
            raise ValueError(f"confusion matrix must be {size}x{size}")
        if any(value < 0 for row in self.counts for value in row):
            raise ValueError("confusion counts must be non-negative")
        return self

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    @property
    def trace(self) -> int:
        return sum(self.counts[i][i] for i in range(len(self.counts)))


class Metrics(BaseModel):
    """
    Classification quality on a set of labelled windows.

    Attributes:
        accuracy: trace / total of the confusion matrix
        precision: Per-class precision (0 where nothing was predicted)
        recall: Per-class recall (0 where the class has no support)
        support: Windows per true class
        confusion: The confusion matrix
        reference_accuracy: Reference accuracy for the same task, when known
    """

    accuracy: float = Field(ge=0, le=1)
    precision: List[float]
    recall: List[float]
    support: List[int]
    confusion: ConfusionMatrix
    reference_accuracy: Optional[float] = None


class RunManifest(BaseModel):
    """
    What is needed to reproduce a run.

    Attributes:
        command: CLI subcommand that produced the run
        config: Snapshot of the run configuration
        dataset_digests: SHA-256 of each split partition
        seeds: Seeds in effect
        tool_version: dgdata version
        wall_clock_seconds: Elapsed time of the command
    """

    command: str
    config: Dict[str, Any]
    dataset_digests: Dict[str, str]
    seeds: Dict[str, int]
    tool_version: str
    wall_clock_seconds: float = Field(ge=0)
