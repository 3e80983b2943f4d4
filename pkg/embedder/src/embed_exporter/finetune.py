"""End-to-end fine-tuning of a trace-text classifier on top of the encoder."""

from __future__ import annotations

import copy
import warnings
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .encoder import Encoder, batch_ids, mean_pool
from .io import SplitAssignment, TraceText
from .metrics import evaluate


@dataclass
class FinetuneConfig:
    task: str = "ad"  # "ad" binary, "fc" multiclass over fault kinds
    epochs: int = 5
    batch_size: int = 8
    lr: float = 2e-4
    weight_decay: float = 0.01
    seed: int = 0


@dataclass
class TaskTexts:
    texts: list[str]
    labels: np.ndarray
    trace_ids: list[str]
    class_names: list[str]

    @property
    def num_classes(self) -> int:
        return len(self.class_names) if len(self.class_names) > 2 else 1


def task_texts(traces: list[TraceText], task: str) -> TaskTexts:
    """ad: all traces, abnormal positive. fc: faulted traces, sorted kinds as classes."""
    if task == "ad":
        return TaskTexts(
            texts=[t.text for t in traces],
            labels=np.array([int(t.label != "normal") for t in traces]),
            trace_ids=[t.trace_id for t in traces],
            class_names=["normal", "abnormal"],
        )
    faulted = [t for t in traces if t.label != "normal"]
    kinds = sorted({t.label for t in faulted})
    index = {kind: i for i, kind in enumerate(kinds)}
    return TaskTexts(
        texts=[t.text for t in faulted],
        labels=np.array([index[t.label] for t in faulted]),
        trace_ids=[t.trace_id for t in faulted],
        class_names=kinds,
    )


def part_indices(data: TaskTexts, splits: SplitAssignment, part: str) -> list[int]:
    return [i for i, tid in enumerate(data.trace_ids) if splits.parts.get(tid) == part]


class TraceClassifier(nn.Module):
    """Encoder, mean pooling over token positions, linear head."""

    def __init__(self, encoder: Encoder, num_outputs: int):
        super().__init__()
        self.encoder = encoder
        self.backbone = encoder.model
        self.head = nn.Linear(encoder.dim, num_outputs)

    def forward(self, input_ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        hidden = self.backbone(input_ids=input_ids, attention_mask=mask).last_hidden_state
        return self.head(mean_pool(hidden, mask))


def class_weights(labels: np.ndarray, k: int) -> np.ndarray:
    """w_c = N / (K * N_c); for the binary head a single pos_weight = neg/pos."""
    if k == 1:
        pos = int(np.sum(labels == 1))
        neg = len(labels) - pos
        return np.array([neg / pos if pos else 1.0])
    counts = np.bincount(labels, minlength=k)
    if (counts == 0).any():
        warnings.warn("some classes absent from the training split")
    return np.where(counts > 0, len(labels) / (k * np.maximum(counts, 1)), 0.0)


def _predict(model: TraceClassifier, texts: list[str], task: str, batch_size: int = 16) -> np.ndarray:
    model.eval()
    preds = []
    with torch.no_grad():
        for start in range(0, len(texts), batch_size):
            input_ids, mask, _ = batch_ids(model.encoder, texts[start : start + batch_size])
            logits = model(input_ids, mask)
            if task == "ad":
                preds.append((torch.sigmoid(logits[:, 0]) > 0.5).long().numpy())
            else:
                preds.append(logits.argmax(dim=1).numpy())
    return np.concatenate(preds) if preds else np.array([], dtype=int)


def finetune_trace_classifier(
    traces: list[TraceText], splits: SplitAssignment, encoder: Encoder, config: FinetuneConfig
) -> tuple[TraceClassifier, list[dict], dict[str, dict]]:
    """5-epoch default fine-tune with class weighting and best-val-F1 selection."""
    data = task_texts(traces, config.task)
    train = part_indices(data, splits, "train")
    val = part_indices(data, splits, "val")
    test = part_indices(data, splits, "test")
    if not train or not val:
        raise ValueError("train and val splits must be non-empty")

    torch.manual_seed(config.seed)
    model = TraceClassifier(encoder, data.num_classes)
    weights = class_weights(data.labels[train], data.num_classes)
    if config.task == "ad":
        criterion = nn.BCEWithLogitsLoss(pos_weight=torch.tensor(weights[0]))
    else:
        criterion = nn.CrossEntropyLoss(weight=torch.tensor(weights, dtype=torch.float32))
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)

    order_rng = np.random.default_rng(config.seed + 1)
    epoch_log: list[dict] = []
    best_state = None
    best_f1 = -1.0
    for epoch in range(config.epochs):
        model.train()
        shuffled = order_rng.permutation(train)
        losses = []
        for start in range(0, len(shuffled), config.batch_size):
            idx = shuffled[start : start + config.batch_size]
            input_ids, mask, _ = batch_ids(model.encoder, [data.texts[i] for i in idx])
            logits = model(input_ids, mask)
            target = torch.tensor(data.labels[idx])
            if config.task == "ad":
                loss = criterion(logits[:, 0], target.to(torch.float32))
            else:
                loss = criterion(logits, target)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        val_preds = _predict(model, [data.texts[i] for i in val], config.task)
        val_f1 = evaluate(val_preds, data.labels[val], config.task, data.num_classes)["f1"]
        epoch_log.append({"epoch": epoch, "train_loss": float(np.mean(losses)), "val_f1": val_f1})
        if val_f1 > best_f1:  # strict: earliest epoch wins ties
            best_f1 = val_f1
            best_state = copy.deepcopy(model.state_dict())
    model.load_state_dict(best_state)

    metrics = {}
    for name, idx in (("val", val), ("test", test)):
        preds = _predict(model, [data.texts[i] for i in idx], config.task)
        metrics[name] = evaluate(preds, data.labels[idx], config.task, data.num_classes)
    return model, epoch_log, metrics
