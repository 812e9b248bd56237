"""Classification metrics on label sequences.

Precision, recall and F1 are macro-averaged over the labels that occur in
either the true or the predicted sequence; a label never predicted gets
precision 0. With that convention a perfect prediction scores 1.0 on every
metric, whatever the label distribution.
"""

from __future__ import annotations

from typing import Callable, Sequence


def accuracy(y_true: Sequence, y_pred: Sequence) -> float:
    if len(y_true) != len(y_pred):
        raise ValueError("length mismatch")
    if not y_true:
        raise ValueError("empty input")
    return sum(1 for t, p in zip(y_true, y_pred) if t == p) / len(y_true)


def _per_label(y_true: Sequence, y_pred: Sequence):
    labels = sorted(set(y_true) | set(y_pred), key=str)
    for lab in labels:
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == lab and p == lab)
        n_pred = sum(1 for p in y_pred if p == lab)
        n_true = sum(1 for t in y_true if t == lab)
        prec = tp / n_pred if n_pred else 0.0
        rec = tp / n_true if n_true else 0.0
        yield prec, rec


def precision(y_true: Sequence, y_pred: Sequence) -> float:
    vals = [p for p, _ in _per_label(y_true, y_pred)]
    return sum(vals) / len(vals)


def recall(y_true: Sequence, y_pred: Sequence) -> float:
    vals = [r for _, r in _per_label(y_true, y_pred)]
    return sum(vals) / len(vals)


def f1(y_true: Sequence, y_pred: Sequence) -> float:
    vals = [2 * p * r / (p + r) if p + r else 0.0 for p, r in _per_label(y_true, y_pred)]
    return sum(vals) / len(vals)


METRICS: dict[str, Callable[[Sequence, Sequence], float]] = {
    "accuracy": accuracy,
    "precision": precision,
    "recall": recall,
    "f1": f1,
}


def get_metric(name: str) -> Callable[[Sequence, Sequence], float]:
    try:
        return METRICS[name]
    except KeyError:
        raise ValueError(f"unknown metric {name!r}; choose from {sorted(METRICS)}") from None
