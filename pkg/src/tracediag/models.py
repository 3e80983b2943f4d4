"""Classifiers: count-vector logistic regression, two-layer graph convolutional
network with global mean pooling, and the embedding-augmented hybrid variant."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import BGL, TRACEBENCH, TraceSlice
from .graphs import TraceGraph
from .numerics import (
    AdamWState,
    NormalizedAdjacency,
    ShapeError,
    adamw_step,
    apply_adjacency,
    loss_bce_weighted,
    loss_ce_weighted,
    normalize_adjacency,
    relu,
    sigmoid,
)

OOV = "<OOV>"

CHECKPOINT_VERSION = 1


@dataclass
class GcnModel:
    w1: np.ndarray  # f x h
    b1: np.ndarray  # h
    w2: np.ndarray  # h x h
    b2: np.ndarray  # h
    w_out: np.ndarray  # h x K
    b_out: np.ndarray  # K

    @property
    def f(self) -> int:
        return self.w1.shape[0]

    @property
    def k(self) -> int:
        return self.w_out.shape[1]

    def params_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self._blocks()])

    def set_params_flat(self, flat: np.ndarray) -> None:
        offset = 0
        for p in self._blocks():
            p.flat[:] = flat[offset : offset + p.size]
            offset += p.size

    def _blocks(self):
        return [self.w1, self.b1, self.w2, self.b2, self.w_out, self.b_out]

    def copy(self) -> "GcnModel":
        return GcnModel(*(p.copy() for p in self._blocks()))


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def gcn_init(f: int, h: int, k: int, seed: int) -> GcnModel:
    if min(f, h, k) <= 0:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    return GcnModel(
        w1=_glorot(rng, f, h),
        b1=np.zeros(h),
        w2=_glorot(rng, h, h),
        b2=np.zeros(h),
        w_out=_glorot(rng, h, k),
        b_out=np.zeros(k),
    )


@dataclass
class GraphBatch:
    """Block-diagonal concatenation of member graphs."""

    features: np.ndarray  # N x f
    adjacency: NormalizedAdjacency  # over all N nodes, block-diagonal
    graph_assignment: np.ndarray  # N, node -> graph index
    graph_sizes: np.ndarray  # B
    labels: np.ndarray  # B

    @property
    def b(self) -> int:
        return len(self.graph_sizes)


def make_batch(graphs: list[TraceGraph], labels: list[int], symmetrize: bool = True) -> GraphBatch:
    if len(graphs) != len(labels):
        raise ShapeError("graphs/labels length mismatch")
    offsets = np.cumsum([0] + [g.n for g in graphs])
    n_total = int(offsets[-1])
    edges = []
    assignment = np.zeros(n_total, dtype=np.int64)
    for gi, g in enumerate(graphs):
        off = int(offsets[gi])
        assignment[off : off + g.n] = gi
        edges.extend((src + off, dst + off) for src, dst in g.edges)
    # Block-diagonal normalization equals per-graph normalization: degrees
    # never cross graph boundaries.
    adjacency = normalize_adjacency(edges, n_total, symmetrize=symmetrize)
    return GraphBatch(
        features=np.vstack([g.features for g in graphs]),
        adjacency=adjacency,
        graph_assignment=assignment,
        graph_sizes=np.array([g.n for g in graphs], dtype=np.int64),
        labels=np.asarray(labels, dtype=np.int64),
    )


@dataclass
class GcnCache:
    batch: GraphBatch
    m1: np.ndarray
    pre1: np.ndarray
    h1: np.ndarray
    m2: np.ndarray
    pre2: np.ndarray
    h2: np.ndarray
    pooled: np.ndarray


def _mean_pool(h: np.ndarray, batch: GraphBatch) -> np.ndarray:
    pooled = np.zeros((batch.b, h.shape[1]))
    np.add.at(pooled, batch.graph_assignment, h)
    return pooled / batch.graph_sizes[:, None]


def gcn_forward(model: GcnModel, batch: GraphBatch) -> tuple[np.ndarray, GcnCache]:
    if batch.features.shape[1] != model.f:
        raise ShapeError(f"feature width {batch.features.shape[1]} != model f {model.f}")
    m1 = apply_adjacency(batch.adjacency, batch.features)
    pre1 = m1 @ model.w1 + model.b1
    h1 = relu(pre1)
    m2 = apply_adjacency(batch.adjacency, h1)
    pre2 = m2 @ model.w2 + model.b2
    h2 = relu(pre2)
    pooled = _mean_pool(h2, batch)
    logits = pooled @ model.w_out + model.b_out
    cache = GcnCache(batch=batch, m1=m1, pre1=pre1, h1=h1, m2=m2, pre2=pre2, h2=h2, pooled=pooled)
    return logits, cache


def _apply_adjacency_t(adj: NormalizedAdjacency, x: np.ndarray) -> np.ndarray:
    flipped = NormalizedAdjacency(n=adj.n, rows=adj.cols, cols=adj.rows, weights=adj.weights)
    return apply_adjacency(flipped, x)


def gcn_backward(model: GcnModel, cache: GcnCache, dlogits: np.ndarray) -> GcnModel:
    """Exact gradients for all six parameter blocks, returned in model layout."""
    batch = cache.batch
    if dlogits.shape != (batch.b, model.k):
        raise ShapeError("dlogits shape does not match cached forward")

    d_w_out = cache.pooled.T @ dlogits
    d_b_out = dlogits.sum(axis=0)
    d_pooled = dlogits @ model.w_out.T

    d_h2 = d_pooled[batch.graph_assignment] / batch.graph_sizes[batch.graph_assignment][:, None]
    d_pre2 = d_h2 * (cache.pre2 > 0)
    d_w2 = cache.m2.T @ d_pre2
    d_b2 = d_pre2.sum(axis=0)
    d_h1 = _apply_adjacency_t(batch.adjacency, d_pre2 @ model.w2.T)
    d_pre1 = d_h1 * (cache.pre1 > 0)
    d_w1 = cache.m1.T @ d_pre1
    d_b1 = d_pre1.sum(axis=0)
    return GcnModel(w1=d_w1, b1=d_b1, w2=d_w2, b2=d_b2, w_out=d_w_out, b_out=d_b_out)


# ---------------------------------------------------------------------------
# Message Count Vector baseline.


@dataclass
class McvModel:
    vocab: list[str]  # event keys, OOV slot last
    w: np.ndarray  # V x K
    b: np.ndarray  # K

    @property
    def k(self) -> int:
        return self.w.shape[1]


def event_key(op_name: str, description: str, kind: str, key_field: str = "auto") -> str:
    """MCV vocabulary key: operation name for trace-table data, template for logs."""
    if key_field == "op":
        return op_name
    if key_field == "template":
        return description
    return op_name if kind == TRACEBENCH else description


def mcv_build_vocab(train_slices: list[TraceSlice], kind: str, key_field: str = "auto") -> list[str]:
    keys = set()
    for slice_ in train_slices:
        for ev in slice_.events:
            keys.add(event_key(ev.op_name, ev.description, kind, key_field))
    return sorted(keys) + [OOV]


def mcv_vectorize(slice_: TraceSlice, vocab: list[str], kind: str, key_field: str = "auto") -> np.ndarray:
    index = {key: i for i, key in enumerate(vocab[:-1])}
    vec = np.zeros(len(vocab))
    for ev in slice_.events:
        key = event_key(ev.op_name, ev.description, kind, key_field)
        vec[index.get(key, len(vocab) - 1)] += 1.0
    return vec


@dataclass
class LrConfig:
    epochs: int = 200
    lr: float = 1e-3
    weight_decay: float = 0.01
    seed: int = 0


def lr_train(
    x: np.ndarray,
    labels: np.ndarray,
    class_weights: np.ndarray,
    config: LrConfig,
    vocab: list[str] | None = None,
) -> tuple[McvModel, list[float]]:
    """Full-batch AdamW on weighted CE (K >= 2) or BCE-with-pos-weight (K = 1)."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    v = x.shape[1]
    k = 1 if class_weights.size == 1 else class_weights.size

    rng = np.random.default_rng(config.seed)
    w = _glorot(rng, v, k) * 0.1
    b = np.zeros(k)
    flat = np.concatenate([w.ravel(), b])
    state = AdamWState.for_params(flat.size, lr=config.lr, weight_decay=config.weight_decay)

    losses = []
    for _ in range(config.epochs):
        w = flat[: v * k].reshape(v, k)
        b = flat[v * k :]
        logits = x @ w + b
        if k == 1:
            loss, dlogits = loss_bce_weighted(logits[:, 0], labels.astype(np.float64), float(class_weights[0]))
            dlogits = dlogits[:, None]
        else:
            loss, dlogits = loss_ce_weighted(logits, labels, class_weights)
        grad = np.concatenate([(x.T @ dlogits).ravel(), dlogits.sum(axis=0)])
        flat = adamw_step(flat, grad, state)
        losses.append(loss)

    model = McvModel(vocab=list(vocab) if vocab is not None else [], w=flat[: v * k].reshape(v, k).copy(), b=flat[v * k :].copy())
    return model, losses


def predict_logits(logits: np.ndarray, task: str) -> np.ndarray:
    """Logits to labels: strict 0.5 sigmoid threshold for detection, lowest-index
    argmax for classification."""
    logits = np.asarray(logits, dtype=np.float64)
    if task == "ad":
        if logits.ndim == 2:
            logits = logits[:, 0]
        return (sigmoid(logits) > 0.5).astype(np.int64)
    return np.argmax(logits, axis=1).astype(np.int64)


def mcv_predict(model: McvModel, x: np.ndarray, task: str) -> np.ndarray:
    return predict_logits(x @ model.w + model.b, task)


def gcn_predict(model: GcnModel, batch: GraphBatch, task: str) -> np.ndarray:
    logits, _ = gcn_forward(model, batch)
    return predict_logits(logits, task)


# ---------------------------------------------------------------------------
# Checkpoints: versioned JSON keeping full float64 precision via repr round-trip.


def save_checkpoint(path: str | Path, model: GcnModel | McvModel, meta: dict | None = None) -> None:
    doc: dict = {"version": CHECKPOINT_VERSION, "meta": meta or {}}
    if isinstance(model, GcnModel):
        doc["kind"] = "gcn"
        doc["params"] = {
            "w1": model.w1.tolist(),
            "b1": model.b1.tolist(),
            "w2": model.w2.tolist(),
            "b2": model.b2.tolist(),
            "w_out": model.w_out.tolist(),
            "b_out": model.b_out.tolist(),
        }
    else:
        doc["kind"] = "mcv"
        doc["vocab"] = model.vocab
        doc["params"] = {"w": model.w.tolist(), "b": model.b.tolist()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path: str | Path) -> tuple[GcnModel | McvModel, dict]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ShapeError(f"unsupported checkpoint version {doc.get('version')!r}")
    p = doc["params"]
    if doc["kind"] == "gcn":
        model: GcnModel | McvModel = GcnModel(
            w1=np.array(p["w1"]),
            b1=np.array(p["b1"]),
            w2=np.array(p["w2"]),
            b2=np.array(p["b2"]),
            w_out=np.array(p["w_out"]),
            b_out=np.array(p["b_out"]),
        )
    elif doc["kind"] == "mcv":
        model = McvModel(vocab=doc["vocab"], w=np.array(p["w"]), b=np.array(p["b"]))
    else:
        raise ShapeError(f"unknown checkpoint kind {doc['kind']!r}")
    return model, doc.get("meta", {})
