"""Confusion matrices and multi-class balanced accuracy.

The default balanced accuracy treats every class as a one-vs-all problem
and averages sensitivity and specificity over all classes::

    bAcc = 1/(2C) * sum_c (sens_c + spec_c)

Mean recall (sum_c sens_c / C) is available as the alternative definition.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class ConfusionMatrix:
    """C x C counts; rows are true classes, columns are predictions."""

    def __init__(self, counts, class_names=None):
        counts = np.asarray(counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError(f"confusion matrix must be square, got shape {counts.shape}")
        if (counts < 0).any():
            raise ValueError("confusion counts must be non-negative")
        self.counts = counts
        self.class_names = list(class_names) if class_names is not None else [str(c) for c in range(len(counts))]

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def one_vs_all(self, c: int) -> tuple[int, int, int, int]:
        """(TP, TN, FP, FN) for class ``c`` against the rest."""
        tp = int(self.counts[c, c])
        fn = int(self.counts[c].sum()) - tp
        fp = int(self.counts[:, c].sum()) - tp
        tn = self.total - tp - fn - fp
        return tp, tn, fp, fn


def confusion(true_labels, predicted_labels, n_classes: int, class_names=None) -> ConfusionMatrix:
    t = np.asarray(true_labels, dtype=np.int64).reshape(-1)
    p = np.asarray(predicted_labels, dtype=np.int64).reshape(-1)
    if t.shape != p.shape:
        raise ValueError(f"{len(t)} true labels but {len(p)} predictions")
    for name, arr in (("true", t), ("predicted", p)):
        if len(arr) and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"{name} label outside 0..{n_classes - 1}")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts, class_names)


class ClassRates(NamedTuple):
    sensitivity: float
    specificity: float
    degenerate: bool  # an empty denominator was replaced by 0


def sens_spec(cm: ConfusionMatrix, c: int) -> ClassRates:
    tp, tn, fp, fn = cm.one_vs_all(c)
    degenerate = False
    if tp + fn > 0:
        sens = tp / (tp + fn)
    else:
        sens, degenerate = 0.0, True
    if tn + fp > 0:
        spec = tn / (tn + fp)
    else:
        spec, degenerate = 0.0, True
    return ClassRates(sens, spec, degenerate)


def balanced_accuracy(cm: ConfusionMatrix, mean_recall: bool = False) -> float:
    if cm.total == 0:
        raise ValueError("balanced accuracy of an empty confusion matrix")
    rates = [sens_spec(cm, c) for c in range(cm.n_classes)]
    if mean_recall:
        return sum(r.sensitivity for r in rates) / cm.n_classes
    return sum(r.sensitivity + r.specificity for r in rates) / (2 * cm.n_classes)


def mean_recall(cm: ConfusionMatrix) -> float:
    return balanced_accuracy(cm, mean_recall=True)


def report(cm: ConfusionMatrix) -> dict:
    """JSON-ready summary: per-class rates, both accuracy definitions, degeneracy flags."""
    per_class = {}
    for c, name in enumerate(cm.class_names):
        r = sens_spec(cm, c)
        per_class[name] = {"sensitivity": r.sensitivity, "specificity": r.specificity,
                           "degenerate": r.degenerate}
    return {
        "bacc": balanced_accuracy(cm),
        "mean_recall": mean_recall(cm),
        "n_samples": cm.total,
        "per_class": per_class,
        "confusion": cm.counts.tolist(),
    }
