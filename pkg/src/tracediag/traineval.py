"""Stratified splitting, class weighting, training loops with best-validation-F1
selection, and metric/report computation."""

from __future__ import annotations

import datetime
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graphs import TraceGraph
from .models import (
    GcnModel,
    LrConfig,
    McvModel,
    gcn_forward,
    gcn_backward,
    gcn_init,
    lr_train,
    make_batch,
    predict_logits,
)
from .numerics import AdamWState, ShapeError, adamw_step, loss_bce_weighted, loss_ce_weighted

RATIOS = (0.70, 0.15, 0.15)


@dataclass
class SplitIndices:
    train: list[int]
    val: list[int]
    test: list[int]
    seed: int
    ratios: tuple[float, float, float] = RATIOS


@dataclass
class TrainConfig:
    task: str = "ad"  # ad | fc
    model_kind: str = "gcn"  # baseline | gcn | hybrid
    epochs: int = 30
    batch_size: int = 16
    seed: int = 0
    lr: float = 1e-3
    weight_decay: float = 0.01
    hidden: int = 64

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")


@dataclass
class Metrics:
    precision: float
    recall: float
    f1: float
    mode: str  # binary | macro
    per_class: list[tuple[float, float, float]] | None = None

    def as_dict(self) -> dict:
        doc = {"precision": self.precision, "recall": self.recall, "f1": self.f1, "mode": self.mode}
        if self.per_class is not None:
            doc["per_class"] = [list(t) for t in self.per_class]
        return doc


def stratified_split(labels: list, ratios: tuple[float, float, float] = RATIOS, seed: int = 0) -> SplitIndices:
    """Seeded per-class shuffle with floor cuts at 70% and 85%."""
    if not labels:
        raise ValueError("labels must be non-empty")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    by_class: dict = {}
    for i, lab in enumerate(labels):
        by_class.setdefault(lab, []).append(i)

    rng = np.random.default_rng(seed)
    train: list[int] = []
    val: list[int] = []
    test: list[int] = []
    for lab in sorted(by_class, key=str):
        idx = np.array(by_class[lab])
        if len(idx) < 3:
            warnings.warn(f"class {lab!r} has {len(idx)} members; placing all in train")
            train.extend(int(i) for i in idx)
            continue
        perm = idx[rng.permutation(len(idx))]
        cut1 = int(np.floor(ratios[0] * len(idx)))
        cut2 = int(np.floor((ratios[0] + ratios[1]) * len(idx)))
        train.extend(int(i) for i in perm[:cut1])
        val.extend(int(i) for i in perm[cut1:cut2])
        test.extend(int(i) for i in perm[cut2:])
    return SplitIndices(train=sorted(train), val=sorted(val), test=sorted(test), seed=seed)


def compute_class_weights(train_labels: np.ndarray, k: int) -> np.ndarray:
    """Inverse-frequency weights w_c = N/(K*N_c); K=1 yields the neg/pos ratio."""
    train_labels = np.asarray(train_labels, dtype=np.int64)
    n = train_labels.size
    if k == 1:
        pos = int(np.sum(train_labels == 1))
        neg = n - pos
        if pos == 0:
            warnings.warn("no positive examples in training; pos_weight set to 1")
            return np.array([1.0])
        return np.array([neg / pos])
    weights = np.zeros(k)
    for c in range(k):
        n_c = int(np.sum(train_labels == c))
        if n_c == 0:
            warnings.warn(f"class {c} absent from training; weight set to 0")
        else:
            weights[c] = n / (k * n_c)
    return weights


def binary_metrics(preds: np.ndarray, labels: np.ndarray, positive: int = 1) -> Metrics:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise ShapeError("preds/labels length mismatch")
    tp = int(np.sum((preds == positive) & (labels == positive)))
    fp = int(np.sum((preds == positive) & (labels != positive)))
    fn = int(np.sum((preds != positive) & (labels == positive)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(precision=precision, recall=recall, f1=f1, mode="binary")


def macro_metrics(preds: np.ndarray, labels: np.ndarray, k: int) -> Metrics:
    """Equal-weight average of one-vs-rest metrics over all K classes."""
    per_class = []
    for c in range(k):
        m = binary_metrics(np.asarray(preds) == c, np.asarray(labels) == c, positive=True)
        per_class.append((m.precision, m.recall, m.f1))
    arr = np.array(per_class)
    return Metrics(
        precision=float(arr[:, 0].mean()),
        recall=float(arr[:, 1].mean()),
        f1=float(arr[:, 2].mean()),
        mode="macro",
        per_class=per_class,
    )


def evaluate_predictions(preds: np.ndarray, labels: np.ndarray, task: str, k: int) -> Metrics:
    if task == "ad":
        return binary_metrics(preds, labels)
    return macro_metrics(preds, labels, k)


@dataclass
class GraphDataset:
    """Graphs plus integer labels, pre-split."""

    graphs: list[TraceGraph]
    labels: np.ndarray
    split: SplitIndices
    num_classes: int  # 1 for detection logit, else class count

    def part(self, which: str) -> tuple[list[TraceGraph], np.ndarray]:
        idx = getattr(self.split, which)
        return [self.graphs[i] for i in idx], self.labels[idx]


@dataclass
class VectorDataset:
    x: np.ndarray
    labels: np.ndarray
    split: SplitIndices
    num_classes: int
    vocab: list[str] = field(default_factory=list)

    def part(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        idx = getattr(self.split, which)
        return self.x[idx], self.labels[idx]


def _loss_and_grad(logits, labels, weights, k):
    if k == 1:
        loss, d = loss_bce_weighted(logits[:, 0], labels.astype(np.float64), float(weights[0]))
        return loss, d[:, None]
    return loss_ce_weighted(logits, labels, weights)


def train_gcn(data: GraphDataset, config: TrainConfig) -> tuple[GcnModel, list[dict]]:
    """Mini-batch training with AdamW; returns the best-validation-F1 checkpoint."""
    train_graphs, train_labels = data.part("train")
    if not train_graphs:
        raise ValueError("empty training split")
    val_graphs, val_labels = data.part("val")

    k = data.num_classes
    weights = compute_class_weights(train_labels, k)
    f = train_graphs[0].features.shape[1]
    model = gcn_init(f, config.hidden, k, seed=config.seed)
    flat = model.params_flat()
    state = AdamWState.for_params(flat.size, lr=config.lr, weight_decay=config.weight_decay)
    shuffle_rng = np.random.default_rng(config.seed + 1)

    val_batch = make_batch(val_graphs, list(val_labels)) if val_graphs else None
    best_model = model.copy()
    best_f1 = -1.0
    epoch_log: list[dict] = []
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(train_graphs))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = make_batch([train_graphs[i] for i in idx], [int(train_labels[i]) for i in idx])
            model.set_params_flat(flat)
            logits, cache = gcn_forward(model, batch)
            loss, dlogits = _loss_and_grad(logits, batch.labels, weights, k)
            grads = gcn_backward(model, cache, dlogits)
            flat = adamw_step(flat, grads.params_flat(), state)
            epoch_loss += loss
            n_batches += 1

        model.set_params_flat(flat)
        if val_batch is not None:
            val_logits, _ = gcn_forward(model, val_batch)
            val_preds = predict_logits(val_logits, config.task)
            m = evaluate_predictions(val_preds, val_labels, config.task, k)
        else:
            m = Metrics(0.0, 0.0, 0.0, "binary")
        epoch_log.append(
            {
                "epoch": epoch,
                "train_loss": epoch_loss / max(n_batches, 1),
                "val_precision": m.precision,
                "val_recall": m.recall,
                "val_f1": m.f1,
            }
        )
        if m.f1 > best_f1:
            best_f1 = m.f1
            best_model = model.copy()
    return best_model, epoch_log


def train_baseline(data: VectorDataset, config: TrainConfig) -> tuple[McvModel, list[dict]]:
    """Full-batch logistic regression; per-epoch validation drives selection."""
    x_train, y_train = data.part("train")
    if x_train.shape[0] == 0:
        raise ValueError("empty training split")
    x_val, y_val = data.part("val")
    k = data.num_classes
    weights = compute_class_weights(y_train, k)

    # Reuse the single-step trainer epoch by epoch so validation can be logged.
    lr_cfg = LrConfig(epochs=1, lr=config.lr, weight_decay=config.weight_decay, seed=config.seed)
    v = x_train.shape[1]
    cols = 1 if k == 1 else k
    rng = np.random.default_rng(config.seed)
    limit = np.sqrt(6.0 / (v + cols))
    flat = np.concatenate([(rng.uniform(-limit, limit, size=(v, cols)) * 0.1).ravel(), np.zeros(cols)])
    state = AdamWState.for_params(flat.size, lr=config.lr, weight_decay=config.weight_decay)

    best = None
    best_f1 = -1.0
    epoch_log: list[dict] = []
    for epoch in range(config.epochs):
        w = flat[: v * cols].reshape(v, cols)
        b = flat[v * cols :]
        logits = x_train @ w + b
        loss, dlogits = _loss_and_grad(logits, y_train, weights, k)
        grad = np.concatenate([(x_train.T @ dlogits).ravel(), dlogits.sum(axis=0)])
        flat = adamw_step(flat, grad, state)

        w = flat[: v * cols].reshape(v, cols)
        b = flat[v * cols :]
        if x_val.shape[0]:
            val_preds = predict_logits(x_val @ w + b, config.task)
            m = evaluate_predictions(val_preds, y_val, config.task, k)
        else:
            m = Metrics(0.0, 0.0, 0.0, "binary")
        epoch_log.append(
            {
                "epoch": epoch,
                "train_loss": loss,
                "val_precision": m.precision,
                "val_recall": m.recall,
                "val_f1": m.f1,
            }
        )
        if m.f1 > best_f1:
            best_f1 = m.f1
            best = McvModel(vocab=list(data.vocab), w=w.copy(), b=b.copy())
    assert best is not None
    return best, epoch_log


def train_loop(data: GraphDataset | VectorDataset, config: TrainConfig):
    if config.model_kind in ("gcn", "hybrid"):
        if not isinstance(data, GraphDataset):
            raise TypeError("graph models require a GraphDataset")
        return train_gcn(data, config)
    if not isinstance(data, VectorDataset):
        raise TypeError("the baseline requires a VectorDataset")
    return train_baseline(data, config)


def best_epoch(epoch_log: list[dict]) -> int:
    """Argmax of validation F1, earliest epoch on ties."""
    best_i, best_f1 = 0, -1.0
    for entry in epoch_log:
        if entry["val_f1"] > best_f1:
            best_f1 = entry["val_f1"]
            best_i = entry["epoch"]
    return best_i


def write_report(metadata: dict, metrics: dict[str, Metrics], epoch_log: list[dict], out_path: str | Path) -> None:
    """Reproducible JSON report: sorted keys, one volatile timestamp field."""
    doc = dict(metadata)
    doc["metrics"] = {split: m.as_dict() for split, m in metrics.items()}
    doc["epoch_log"] = epoch_log
    doc["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_splits(trace_ids: list[str], split: SplitIndices, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# seed={split.seed}\n")
        fh.write("TraceId\tSplit\n")
        names = {}
        for which in ("train", "val", "test"):
            for i in getattr(split, which):
                names[i] = which
        for i, tid in enumerate(trace_ids):
            if i in names:
                fh.write(f"{tid}\t{names[i]}\n")


def read_splits(path: str | Path, trace_ids: list[str]) -> SplitIndices:
    assignment: dict[str, str] = {}
    seed = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# seed="):
                seed = int(line[len("# seed=") :])
                continue
            if not line or line.startswith("TraceId"):
                continue
            tid, which = line.split("\t")
            assignment[tid] = which
    parts: dict[str, list[int]] = {"train": [], "val": [], "test": []}
    for i, tid in enumerate(trace_ids):
        if tid in assignment:
            parts[assignment[tid]].append(i)
    return SplitIndices(train=parts["train"], val=parts["val"], test=parts["test"], seed=seed)
