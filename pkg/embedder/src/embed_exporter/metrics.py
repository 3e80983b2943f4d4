"""Precision/recall/F1 matching the shared report schema."""

from __future__ import annotations

import numpy as np


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def binary_metrics(preds: np.ndarray, labels: np.ndarray) -> dict:
    tp = int(np.sum((preds == 1) & (labels == 1)))
    fp = int(np.sum((preds == 1) & (labels != 1)))
    fn = int(np.sum((preds != 1) & (labels == 1)))
    precision, recall, f1 = _prf(tp, fp, fn)
    return {"average": "binary", "precision": precision, "recall": recall, "f1": f1}


def macro_metrics(preds: np.ndarray, labels: np.ndarray, k: int) -> dict:
    per_class = []
    for c in range(k):
        tp = int(np.sum((preds == c) & (labels == c)))
        fp = int(np.sum((preds == c) & (labels != c)))
        fn = int(np.sum((preds != c) & (labels == c)))
        per_class.append(_prf(tp, fp, fn))
    return {
        "average": "macro",
        "precision": float(np.mean([m[0] for m in per_class])),
        "recall": float(np.mean([m[1] for m in per_class])),
        "f1": float(np.mean([m[2] for m in per_class])),
        "per_class": [list(m) for m in per_class],
    }


def evaluate(preds: np.ndarray, labels: np.ndarray, task: str, k: int) -> dict:
    return binary_metrics(preds, labels) if task == "ad" else macro_metrics(preds, labels, k)
