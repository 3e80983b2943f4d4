"""Numerical kernels: adjacency normalization, activations, weighted losses,
AdamW, noisy-OR pooling, and a finite-difference gradient oracle."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import TraceDiagError


class ShapeError(TraceDiagError):
    pass


class DomainError(TraceDiagError):
    pass


@dataclass
class NormalizedAdjacency:
    """Coordinate-list symmetric-normalized adjacency with self-loops."""

    n: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray


def normalize_adjacency(edges: list[tuple[int, int]], n: int, symmetrize: bool = True) -> NormalizedAdjacency:
    """D^(-1/2) (A + I) D^(-1/2) with optional symmetrization of A first."""
    pairs: set[tuple[int, int]] = set()
    for src, dst in edges:
        if not (0 <= src < n and 0 <= dst < n):
            raise IndexError(f"edge ({src},{dst}) out of range for n={n}")
        pairs.add((src, dst))
        if symmetrize:
            pairs.add((dst, src))
    for i in range(n):
        pairs.add((i, i))

    deg = np.zeros(n, dtype=np.int64)
    for r, _ in pairs:
        deg[r] += 1

    ordered = sorted(pairs)
    rows = np.array([r for r, _ in ordered], dtype=np.int64)
    cols = np.array([c for _, c in ordered], dtype=np.int64)
    weights = 1.0 / np.sqrt(deg[rows].astype(np.float64) * deg[cols].astype(np.float64))
    return NormalizedAdjacency(n=n, rows=rows, cols=cols, weights=weights)


def apply_adjacency(adj: NormalizedAdjacency, x: np.ndarray) -> np.ndarray:
    """Sparse-dense product Y = A_hat X with deterministic row-major accumulation."""
    if x.shape[0] != adj.n:
        raise ShapeError(f"matrix has {x.shape[0]} rows, adjacency expects {adj.n}")
    y = np.zeros_like(x, dtype=np.float64)
    np.add.at(y, adj.rows, adj.weights[:, None] * x[adj.cols])
    return y


def adjacency_dense(adj: NormalizedAdjacency) -> np.ndarray:
    dense = np.zeros((adj.n, adj.n))
    dense[adj.rows, adj.cols] = adj.weights
    return dense


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    ex = np.exp(shifted)
    return ex / np.sum(ex, axis=axis, keepdims=True)


def loss_bce_weighted(logits: np.ndarray, labels: np.ndarray, pos_weight: float = 1.0) -> tuple[float, np.ndarray]:
    """Mean positively-weighted binary cross-entropy on logits, with gradient.

    Stable form: -w_i * log sigma(z) = w_i * (log(1+e^-|z|) + max(-z, 0)), and
    symmetrically for the negative term.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if logits.shape != labels.shape:
        raise ShapeError("logits/labels length mismatch")
    if pos_weight <= 0:
        raise DomainError("pos_weight must be positive")
    n = logits.size
    # log sigma(z) = -softplus(-z);  log(1 - sigma(z)) = -softplus(z)
    softplus = lambda t: np.log1p(np.exp(-np.abs(t))) + np.maximum(t, 0.0)
    per = pos_weight * labels * softplus(-logits) + (1.0 - labels) * softplus(logits)
    p = sigmoid(logits)
    dlogits = (pos_weight * labels * (p - 1.0) + (1.0 - labels) * p) / n
    return float(np.mean(per)), dlogits


def loss_ce_weighted(logits: np.ndarray, labels: np.ndarray, class_weights: np.ndarray) -> tuple[float, np.ndarray]:
    """Class-weighted multinomial cross-entropy, normalized by total weight."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    class_weights = np.asarray(class_weights, dtype=np.float64)
    b, k = logits.shape
    if labels.shape != (b,):
        raise ShapeError("labels length mismatch")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise IndexError("label out of range")
    # Zero weights are tolerated for classes absent from the batch.
    if np.any(class_weights < 0):
        raise DomainError("class weights must be non-negative")

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.sum(np.exp(shifted), axis=1))
    log_probs = shifted - log_z[:, None]
    w = class_weights[labels]
    total_w = float(np.sum(w))
    loss = float(np.sum(-w * log_probs[np.arange(b), labels]) / total_w)

    probs = np.exp(log_probs)
    dlogits = probs * w[:, None]
    dlogits[np.arange(b), labels] -= w
    dlogits /= total_w
    return loss, dlogits


@dataclass
class AdamWState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    @staticmethod
    def for_params(n: int, **hyper) -> "AdamWState":
        return AdamWState(m=np.zeros(n), v=np.zeros(n), **hyper)


def adamw_step(params: np.ndarray, grads: np.ndarray, state: AdamWState) -> np.ndarray:
    """One decoupled-weight-decay Adam update; mutates state, returns new params."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ShapeError("parameter/gradient/state shape mismatch")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps) - state.lr * state.weight_decay * params


def noisy_or(scores) -> float:
    """1 - prod(1 - p_i) over a non-empty vector of probabilities."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise DomainError("noisy_or requires a non-empty score vector")
    if np.any(scores < 0.0) or np.any(scores > 1.0):
        raise DomainError("scores must lie in [0, 1]")
    return float(1.0 - np.prod(1.0 - scores))


def finite_difference_gradient(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, coordinate by coordinate."""
    if eps <= 0:
        raise DomainError("eps must be positive")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        g[i] = (hi - lo) / (2.0 * eps)
    return grad
