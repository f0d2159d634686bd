"""Evaluation metrics: balanced accuracy, MAE, macro-F1, confusion matrices.

Balanced accuracy is the unweighted mean of per-class recall; for binary
labels that is ``(TP/(TP+FN) + TN/(TN+FP)) / 2``. Absent classes make a
recall denominator zero, which raises :class:`UndefinedMetricError` rather
than silently returning 0 — evaluation over a restricted split must notice.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, UndefinedMetricError, ValidationError

__all__ = [
    "ClassificationReport",
    "MetricReport",
    "accuracy",
    "balanced_accuracy_binary",
    "balanced_accuracy_multiclass",
    "classification_report",
    "confusion_matrix",
    "mae",
]


def _check_labels(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred)
    t = np.asarray(truth)
    if p.ndim != 1 or t.ndim != 1:
        raise ValidationError("label arrays must be one-dimensional")
    if p.shape != t.shape:
        raise ValidationError(f"length mismatch: {p.shape[0]} predictions vs {t.shape[0]} truths")
    if p.size == 0:
        raise ParameterError("empty label arrays")
    return p.astype(np.int64), t.astype(np.int64)


def accuracy(pred, truth) -> float:
    p, t = _check_labels(pred, truth)
    return float(np.mean(p == t))


def balanced_accuracy_binary(pred, truth) -> float:
    """Mean of sensitivity and specificity over 0/1 labels."""
    p, t = _check_labels(pred, truth)
    bad = set(np.unique(np.concatenate([p, t]))) - {0, 1}
    if bad:
        raise ValidationError(f"binary labels must be 0/1, found {sorted(bad)}")
    tp = int(np.sum((p == 1) & (t == 1)))
    fn = int(np.sum((p == 0) & (t == 1)))
    tn = int(np.sum((p == 0) & (t == 0)))
    fp = int(np.sum((p == 1) & (t == 0)))
    if tp + fn == 0 or tn + fp == 0:
        raise UndefinedMetricError("both classes must appear in the truth labels")
    return 0.5 * (tp / (tp + fn) + tn / (tn + fp))


def balanced_accuracy_multiclass(pred, truth, n_classes: int | None = None) -> float:
    """Mean per-class recall over classes ``0..n_classes-1``."""
    p, t = _check_labels(pred, truth)
    k = int(n_classes) if n_classes is not None else int(max(p.max(), t.max())) + 1
    if p.min() < 0 or t.min() < 0 or p.max() >= k or t.max() >= k:
        raise ValidationError(f"labels must lie in 0..{k - 1}")
    recalls = np.empty(k)
    for c in range(k):
        support = int(np.sum(t == c))
        if support == 0:
            raise UndefinedMetricError(f"class {c} is absent from the truth labels")
        recalls[c] = np.sum((p == c) & (t == c)) / support
    return float(recalls.mean())


def mae(pred, truth) -> float:
    """Mean absolute error between predicted and actual values."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1:
        raise ValidationError("mae expects equal-length one-dimensional arrays")
    if p.size == 0:
        raise ParameterError("empty value arrays")
    return float(np.mean(np.abs(t - p)))


def confusion_matrix(pred, truth, n_classes: int | None = None) -> np.ndarray:
    """Counts with rows indexed by truth and columns by prediction."""
    p, t = _check_labels(pred, truth)
    k = int(n_classes) if n_classes is not None else int(max(p.max(), t.max())) + 1
    if p.min() < 0 or t.min() < 0 or p.max() >= k or t.max() >= k:
        raise ValidationError(f"labels must lie in 0..{k - 1}")
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


@dataclass(frozen=True)
class ClassificationReport:
    """Confusion matrix plus per-class and macro precision/recall/F1.

    Classes with a zero denominator score 0 for the affected quantity, so the
    report is total; use the balanced-accuracy functions when absent classes
    should be an error instead.
    """

    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_precision: float
    macro_recall: float
    macro_f1: float

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.tolist(),
            "precision": self.precision.tolist(),
            "recall": self.recall.tolist(),
            "f1": self.f1.tolist(),
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
        }


def classification_report(pred, truth, n_classes: int | None = None) -> ClassificationReport:
    cm = confusion_matrix(pred, truth, n_classes)
    k = cm.shape[0]
    tp = np.diag(cm).astype(np.float64)
    pred_totals = cm.sum(axis=0).astype(np.float64)
    true_totals = cm.sum(axis=1).astype(np.float64)
    precision = np.divide(tp, pred_totals, out=np.zeros(k), where=pred_totals > 0)
    recall = np.divide(tp, true_totals, out=np.zeros(k), where=true_totals > 0)
    pr = precision + recall
    f1 = np.divide(2 * precision * recall, pr, out=np.zeros(k), where=pr > 0)
    return ClassificationReport(
        confusion=cm,
        precision=precision,
        recall=recall,
        f1=f1,
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
    )


@dataclass(frozen=True)
class MetricReport:
    """Metrics for one split of one run, serializable to JSON and markdown."""

    n: int
    balanced_accuracy: float | None = None
    accuracy: float | None = None
    mae: float | None = None
    macro_f1: float | None = None
    macro_precision: float | None = None
    macro_recall: float | None = None
    confusion: tuple[tuple[int, ...], ...] | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "balanced_accuracy": self.balanced_accuracy,
            "accuracy": self.accuracy,
            "mae": self.mae,
            "macro_f1": self.macro_f1,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "confusion": [list(r) for r in self.confusion] if self.confusion is not None else None,
        }
        out.update(self.extra)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @staticmethod
    def from_dict(d: dict) -> "MetricReport":
        known = {"n", "balanced_accuracy", "accuracy", "mae", "macro_f1", "macro_precision", "macro_recall", "confusion"}
        confusion = d.get("confusion")
        return MetricReport(
            n=d["n"],
            balanced_accuracy=d.get("balanced_accuracy"),
            accuracy=d.get("accuracy"),
            mae=d.get("mae"),
            macro_f1=d.get("macro_f1"),
            macro_precision=d.get("macro_precision"),
            macro_recall=d.get("macro_recall"),
            confusion=tuple(tuple(r) for r in confusion) if confusion is not None else None,
            extra={k: v for k, v in d.items() if k not in known},
        )


def report_for_classification(pred, truth, n_classes: int | None = None) -> MetricReport:
    """Full MetricReport for a classification task (binary or multiclass)."""
    p, t = _check_labels(pred, truth)
    k = int(n_classes) if n_classes is not None else int(max(p.max(), t.max())) + 1
    if k == 2:
        ba = balanced_accuracy_binary(p, t)
    else:
        ba = balanced_accuracy_multiclass(p, t, k)
    rep = classification_report(p, t, k)
    return MetricReport(
        n=p.size,
        balanced_accuracy=ba,
        accuracy=accuracy(p, t),
        macro_f1=rep.macro_f1,
        macro_precision=rep.macro_precision,
        macro_recall=rep.macro_recall,
        confusion=tuple(tuple(int(v) for v in row) for row in rep.confusion),
    )


def report_for_regression(pred, truth) -> MetricReport:
    """MetricReport for a severity-regression task (MAE only)."""
    p = np.asarray(pred, dtype=np.float64)
    return MetricReport(n=p.size, mae=mae(pred, truth))
