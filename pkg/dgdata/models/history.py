"""
Loss breakdowns and the per-epoch training history.
"""
from typing import Dict, List, Optional, Sequence

import pandas as pd
from pydantic import BaseModel, Field, model_validator


class LossBreakdown(BaseModel):
    """
    Per-term losses of one component and their weighted total.

    Attributes:
        component: Component name
        terms: Unweighted term values, in summation order
        weights: Weight of every term
        total: Sum of weight * term, accumulated in term order
    """

    component: str
    terms: Dict[str, float]
    weights: Dict[str, float]
    total: float

    @model_validator(mode="after")
    def _weights_cover_terms(self) -> "LossBreakdown":
        if list(self.terms) != list(self.weights):
            raise ValueError("terms and weights must name the same entries in the same order")
        return self

    @staticmethod
    def weighted_total(terms: Dict[str, float], weights: Dict[str, float]) -> float:
        total = 0.0
        for name, value in terms.items():
            total += weights[name] * value
        return total

    @classmethod
    def from_terms(cls, component: str, terms: Dict[str, float], weights: Dict[str, float]) -> "LossBreakdown":
        return cls(component=component, terms=dict(terms), weights=dict(weights),
                   total=cls.weighted_total(terms, weights))

    @classmethod
    def average(cls, breakdowns: Sequence["LossBreakdown"]) -> "LossBreakdown":
        """Average the terms of several minibatch breakdowns and recompute the total."""
        first = breakdowns[0]
        terms = {name: sum(b.terms[name] for b in breakdowns) / len(breakdowns) for name in first.terms}
        return cls.from_terms(first.component, terms, first.weights)


class EpochRecord(BaseModel):
    """
    Everything logged for one completed epoch.

    Attributes:
        epoch: 1-based epoch number
        fine_grained: Mean fine-grained breakdown, None when ablated
        temporal: Mean temporal breakdown
        classifier: Mean classifier breakdown
        grl_lambda: Reversal strength used by the classifier component
        state_churn: Fraction of windows whose temporal state changed
        attention_beta: Lag weights fitted this epoch
        target_val_accuracy: Accuracy on the target validation windows
    """

    epoch: int = Field(ge=1)
    fine_grained: Optional[LossBreakdown] = None
    temporal: LossBreakdown
    classifier: LossBreakdown
    grl_lambda: float
    state_churn: float = Field(ge=0, le=1)
    attention_beta: List[float] = Field(default_factory=list)
    target_val_accuracy: Optional[float] = None


class TrainHistory(BaseModel):
    """One record per completed epoch."""

    epochs: List[EpochRecord] = Field(default_factory=list)

    def append(self, record: EpochRecord) -> None:
        if record.epoch != len(self.epochs) + 1:
            raise ValueError(f"expected epoch {len(self.epochs) + 1}, got {record.epoch}")
        self.epochs.append(record)

    def to_frame(self) -> pd.DataFrame:
        """Flatten the history into one row per epoch."""
        rows = []
        for record in self.epochs:
            row: Dict[str, object] = {"epoch": record.epoch}
            for name in ("fine_grained", "temporal", "classifier"):
                breakdown = getattr(record, name)
                if breakdown is None:
                    continue
                row[f"{name}_total"] = breakdown.total
                for term, value in breakdown.terms.items():
                    row[f"{name}_{term}"] = value
            row["grl_lambda"] = record.grl_lambda
            row["state_churn"] = record.state_churn
            row["target_val_accuracy"] = record.target_val_accuracy
            for i, beta in enumerate(record.attention_beta, start=1):
                row[f"beta_{i}"] = beta
            rows.append(row)
        return pd.DataFrame(rows)

    def to_csv(self) -> str:
        return self.to_frame().to_csv(index=False, lineterminator="\n")
