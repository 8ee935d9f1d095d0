"""Binary-classification evaluation reports."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ParameterError
from .utils import canonical_json


@dataclass(frozen=True)
class EvalReport:
    """Confusion counts plus the derived metrics, positive class = 1.

    precision and recall are defined as 0 when their denominator is 0, and
    f1 is 0 when precision + recall is 0.
    """

    dataset_id: str
    n: int
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, dataset_id: str, tp: int, fp: int, tn: int, fn: int) -> "EvalReport":
        if min(tp, fp, tn, fn) < 0:
            raise ParameterError("confusion counts must be non-negative")
        n = tp + fp + tn + fn
        if n == 0:
            raise ParameterError("empty confusion matrix")
        precision = tp / (tp + fp) if (tp + fp) else 0.0
        recall = tp / (tp + fn) if (tp + fn) else 0.0
        f1 = 2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
        return cls(
            dataset_id=dataset_id,
            n=n,
            tp=tp,
            fp=fp,
            tn=tn,
            fn=fn,
            accuracy=(tp + tn) / n,
            precision=precision,
            recall=recall,
            f1=f1,
        )

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "n": self.n,
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    def summary(self) -> str:
        return (
            f"{self.dataset_id}: n={self.n} acc={self.accuracy:.4f} "
            f"p={self.precision:.4f} r={self.recall:.4f} f1={self.f1:.4f} "
            f"(tp={self.tp} fp={self.fp} tn={self.tn} fn={self.fn})"
        )
