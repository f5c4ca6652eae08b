"""Confusion counts and the four detection metrics (malicious = positive)."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DataError

METRIC_FIELDS = ("tp", "fp", "tn", "fn", "accuracy", "precision", "recall", "f1")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float


def confusion(predictions, labels) -> ConfusionCounts:
    p = np.asarray(predictions).astype(bool)
    t = np.asarray(labels).astype(bool)
    if p.shape != t.shape:
        raise DataError(f"predictions and labels differ in length: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise DataError("cannot score an empty prediction set")
    return ConfusionCounts(
        tp=int(np.sum(p & t)),
        fp=int(np.sum(p & ~t)),
        tn=int(np.sum(~p & ~t)),
        fn=int(np.sum(~p & t)),
    )


def compute_metrics(c: ConfusionCounts) -> Metrics:
    """Accuracy, precision, recall and F1.

    A ratio whose denominator is zero is reported as 0.
    """
    if c.total <= 0:
        raise DataError("confusion counts are empty")
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    f1_den = 2 * c.tp + c.fp + c.fn
    return Metrics(
        accuracy=(c.tp + c.tn) / c.total,
        precision=precision,
        recall=recall,
        f1=2 * c.tp / f1_den if f1_den else 0.0,
    )


def metrics_record(c: ConfusionCounts, **context) -> dict:
    """One JSON-lines row: the context keys followed by counts and metrics."""
    return {**context, **asdict(c), **asdict(compute_metrics(c))}
