"""Binary classification metrics: balanced accuracy, F1, and pairwise AUC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricError


@dataclass
class EvalResult:
    """Per-sample sigmoid scores and ground-truth labels at a fixed threshold."""

    scores: np.ndarray
    labels: np.ndarray
    threshold: float = 0.5

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.scores.shape != self.labels.shape:
            raise MetricError(f"scores {self.scores.shape} and labels {self.labels.shape} disagree")
        if self.scores.size == 0:
            raise MetricError("empty evaluation result")
        if not np.isin(self.labels, (0, 1)).all():
            raise MetricError("labels must be 0 or 1")
        if ((self.scores < 0) | (self.scores > 1)).any():
            raise MetricError("scores must lie in [0, 1]")

    @property
    def predictions(self):
        return (self.scores >= self.threshold).astype(np.int64)

    def confusion(self):
        pred = self.predictions
        tp = int(((pred == 1) & (self.labels == 1)).sum())
        fp = int(((pred == 1) & (self.labels == 0)).sum())
        tn = int(((pred == 0) & (self.labels == 0)).sum())
        fn = int(((pred == 0) & (self.labels == 1)).sum())
        return tp, fp, tn, fn


def _require_both_classes(result, metric):
    if result.labels.min() == result.labels.max():
        raise MetricError(f"{metric} undefined: labels contain a single class")


def bacc(result):
    """Mean of sensitivity and specificity."""
    _require_both_classes(result, "bacc")
    tp, fp, tn, fn = result.confusion()
    return 0.5 * (tp / (tp + fn) + tn / (tn + fp))


def f1(result):
    """2TP / (2TP + FP + FN)."""
    tp, fp, tn, fn = result.confusion()
    if tp + fp + fn == 0:
        raise MetricError("f1 undefined: no positives in labels or predictions")
    return 2.0 * tp / (2.0 * tp + fp + fn)


def auc(result):
    """Pairwise ranking form: P(score_pos > score_neg) with ties counted half."""
    _require_both_classes(result, "auc")
    pos = result.scores[result.labels == 1]
    neg = result.scores[result.labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return (wins + 0.5 * ties) / (pos.size * neg.size)
