"""Confusion matrices and the UF1 / UAR / ACC metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, NamedTuple, Sequence

import numpy as np


class Metrics(NamedTuple):
    uf1: float
    uar: float
    acc: float

    def to_dict(self) -> Dict[str, float]:
        return {"UF1": self.uf1, "UAR": self.uar, "ACC": self.acc}


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"confusion matrix must be square, got shape {c.shape}")
        if (c < 0).any() or not np.issubdtype(c.dtype, np.integer):
            raise ValueError("confusion matrix must hold non-negative integers")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @classmethod
    def from_pairs(cls, y_true: Iterable[int], y_pred: Iterable[int], n_classes: int) -> "ConfusionMatrix":
        counts = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(counts, (np.asarray(list(y_true), dtype=int), np.asarray(list(y_pred), dtype=int)), 1)
        return cls(counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)


def compute_metrics(cm: ConfusionMatrix) -> Metrics:
    """Unweighted F1, unweighted average recall and accuracy.

    A class whose F1 or recall denominator is zero contributes 0 to the mean.
    """
    c = cm.counts
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    tp = np.diag(c).astype(np.float64)
    fp = c.sum(axis=0) - tp
    fn = c.sum(axis=1) - tp
    f1_den = 2 * tp + fp + fn
    f1 = np.divide(2 * tp, f1_den, out=np.zeros_like(tp), where=f1_den > 0)
    rec_den = tp + fn
    recall = np.divide(tp, rec_den, out=np.zeros_like(tp), where=rec_den > 0)
    return Metrics(float(f1.mean()), float(recall.mean()), float(tp.sum() / cm.total))


def summarize(values: Sequence[float]):
    """(mean, population standard deviation)."""
    a = np.asarray(values, dtype=np.float64)
    return float(a.mean()), float(a.std())
