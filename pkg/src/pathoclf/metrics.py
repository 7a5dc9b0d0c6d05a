"""Confusion matrices and unweighted (macro) classification scores.

Accuracy and the macro averages are computed from integer counts in exact
rational arithmetic and rounded to float once.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import DataError, Dataset, Vocabulary


def confusion_matrix(y_true, y_pred, k: int) -> np.ndarray:
    """K x K counts; rows are true classes, columns predictions."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise DataError("label and prediction vectors differ in length")
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def _exact_mean_of_ratios(num, den) -> float:
    """Mean of ``num/den`` (0 where den == 0) over integer arrays, rounded once."""
    total = sum((Fraction(int(a), int(b)) for a, b in zip(num, den) if b > 0), Fraction(0))
    return float(total / len(num))


def _f1_terms(cm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Integer numerator and denominator of per-class F1 = 2TP / (2TP + FP + FN)."""
    tp = np.diag(cm)
    return 2 * tp, 2 * tp + (cm.sum(axis=0) - tp) + (cm.sum(axis=1) - tp)


def _safe_div(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


@dataclass(frozen=True, eq=False)
class MetricsReport:
    vocab: Vocabulary
    confusion: np.ndarray
    accuracy: float
    balanced_accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_f1: float

    @property
    def support(self) -> np.ndarray:
        return self.confusion.sum(axis=1)

    def to_dict(self) -> dict:
        return {
            "classes": list(self.vocab.names),
            "accuracy": self.accuracy,
            "balanced_accuracy": self.balanced_accuracy,
            "macro_f1": self.macro_f1,
            "precision": self.precision.tolist(),
            "recall": self.recall.tolist(),
            "f1": self.f1.tolist(),
            "support": self.support.tolist(),
            "confusion": self.confusion.tolist(),
        }


def metrics_from_confusion(cm: np.ndarray, vocab: Vocabulary) -> MetricsReport:
    tp = np.diag(cm).astype(np.float64)
    pred_pos = cm.sum(axis=0)
    support = cm.sum(axis=1)
    n = cm.sum()
    if n == 0:
        raise DataError("empty test set")
    precision = _safe_div(tp, pred_pos)
    recall = _safe_div(tp, support)
    # 2PR/(P+R) == 2TP/(2TP+FP+FN); the count form avoids rounding in P and R
    f1_num, f1_den = _f1_terms(cm)
    f1 = _safe_div(f1_num, f1_den)
    present = support > 0
    diag = np.diag(cm)
    return MetricsReport(
        vocab=vocab,
        confusion=cm,
        accuracy=float(Fraction(int(diag.sum()), int(n))),
        balanced_accuracy=_exact_mean_of_ratios(diag[present], support[present]),
        precision=precision,
        recall=recall,
        f1=f1,
        macro_f1=_exact_mean_of_ratios(f1_num, f1_den),
    )


def score(y_true, y_pred, vocab: Vocabulary) -> MetricsReport:
    return metrics_from_confusion(confusion_matrix(y_true, y_pred, len(vocab)), vocab)


def macro_f1(y_true, y_pred, k: int) -> float:
    return _exact_mean_of_ratios(*_f1_terms(confusion_matrix(y_true, y_pred, k)))


def _check_vocab(model, data: Dataset):
    if model.vocab != data.vocab:
        raise DataError(f"vocabulary mismatch: model {list(model.vocab)} vs data {list(data.vocab)}")


def evaluate(model, test: Dataset) -> MetricsReport:
    if test.n == 0:
        raise DataError("empty test set")
    _check_vocab(model, test)
    return score(test.labels, model.predict(test.features), test.vocab)


def percent_correct(model, data: Dataset, assumed_class: str | int) -> float:
    """Percentage of rows predicted as ``assumed_class`` (0-100)."""
    if isinstance(assumed_class, str):
        assumed_class = model.vocab.index(assumed_class)
    pred = model.predict(data.features)
    return 100.0 * float(np.count_nonzero(pred == assumed_class)) / pred.size
