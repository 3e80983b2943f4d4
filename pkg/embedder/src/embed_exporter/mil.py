"""Segment-based multiple-instance classification for long traces.

A trace is split into fixed-size segments of consecutive events; each segment
is scored independently and the trace-level probability is the noisy-OR of the
segment scores. Training backpropagates through the pooling.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .encoder import Encoder, batch_ids, mean_pool
from .io import SplitAssignment
from .metrics import evaluate

SEPARATOR = " [SEP] "
DEFAULT_SEGMENT_SIZE = 32


def segment_events(event_texts: list[str], segment_size: int) -> list[list[str]]:
    """Partition the trace's event texts, in order, into runs of segment_size."""
    if segment_size < 1:
        raise ValueError(f"segment_size must be >= 1, got {segment_size}")
    return [event_texts[i : i + segment_size] for i in range(0, len(event_texts), segment_size)]


def noisy_or_pool(scores: torch.Tensor) -> torch.Tensor:
    """1 - prod(1 - p); identical formula to the graph toolkit's kernel."""
    return 1.0 - torch.prod(1.0 - scores)


def noisy_or(scores: list[float]) -> float:
    return float(noisy_or_pool(torch.tensor(scores, dtype=torch.float64)))


@dataclass
class MilConfig:
    segment_size: int = DEFAULT_SEGMENT_SIZE
    epochs: int = 5
    batch_size: int = 8  # traces per optimizer step
    lr: float = 2e-4
    weight_decay: float = 0.01
    seed: int = 0


@dataclass
class MilTrace:
    trace_id: str
    event_texts: list[str]
    label: int  # 1 = abnormal


class SegmentScorer(nn.Module):
    def __init__(self, encoder: Encoder):
        super().__init__()
        self.encoder = encoder
        self.backbone = encoder.model
        self.head = nn.Linear(encoder.dim, 1)

    def trace_probability(self, event_texts: list[str], segment_size: int) -> torch.Tensor:
        segments = [SEPARATOR.join(seg) for seg in segment_events(event_texts, segment_size)]
        input_ids, mask, _ = batch_ids(self.encoder, segments)
        hidden = self.backbone(input_ids=input_ids, attention_mask=mask).last_hidden_state
        scores = torch.sigmoid(self.head(mean_pool(hidden, mask))[:, 0])
        return noisy_or_pool(scores)


def mil_train_and_score(
    traces: list[MilTrace], splits: SplitAssignment, encoder: Encoder, config: MilConfig
) -> tuple[SegmentScorer, list[dict], dict[str, dict]]:
    by_part = {
        part: [t for t in traces if splits.parts.get(t.trace_id) == part]
        for part in ("train", "val", "test")
    }
    if not by_part["train"] or not by_part["val"]:
        raise ValueError("train and val splits must be non-empty")

    torch.manual_seed(config.seed)
    model = SegmentScorer(encoder)
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    order_rng = np.random.default_rng(config.seed + 1)

    def predict(part: str) -> tuple[np.ndarray, np.ndarray]:
        model.eval()
        with torch.no_grad():
            probs = [float(model.trace_probability(t.event_texts, config.segment_size)) for t in by_part[part]]
        labels = np.array([t.label for t in by_part[part]])
        return (np.array(probs) > 0.5).astype(int), labels

    epoch_log: list[dict] = []
    best_state, best_f1 = None, -1.0
    eps = 1e-7  # keeps log() finite when noisy-OR saturates at 0 or 1
    for epoch in range(config.epochs):
        model.train()
        order = order_rng.permutation(len(by_part["train"]))
        losses = []
        for start in range(0, len(order), config.batch_size):
            optimizer.zero_grad()
            batch_losses = []
            for i in order[start : start + config.batch_size]:
                trace = by_part["train"][int(i)]
                prob = model.trace_probability(trace.event_texts, config.segment_size).clamp(eps, 1 - eps)
                target = torch.tensor(float(trace.label))
                batch_losses.append(-(target * prob.log() + (1 - target) * (1 - prob).log()))
            loss = torch.stack(batch_losses).mean()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        preds, labels = predict("val")
        val_f1 = evaluate(preds, labels, "ad", 1)["f1"]
        epoch_log.append({"epoch": epoch, "train_loss": float(np.mean(losses)), "val_f1": val_f1})
        if val_f1 > best_f1:
            best_f1 = val_f1
            best_state = copy.deepcopy(model.state_dict())
    model.load_state_dict(best_state)

    metrics = {}
    for part in ("val", "test"):
        preds, labels = predict(part)
        metrics[part] = evaluate(preds, labels, "ad", 1)
    return model, epoch_log, metrics
