"""Encoder loading and deterministic per-event embedding.

The default model identifier is the standard base uncased pretrained encoder.
When that identifier cannot be resolved (no local copy, no hub access) the
caller can ask for "local-small" instead: a seeded, randomly initialised
bidirectional transformer with a hashing tokenizer. It shares the exact
architecture and pooling path, so everything downstream behaves identically;
only the weights are not pretrained.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np
import torch
from transformers import BertConfig, BertModel

logger = logging.getLogger(__name__)

DEFAULT_MODEL = "bert-base-uncased"
LOCAL_SMALL = "local-small"

_PAD, _CLS, _SEP, _UNK = 0, 1, 2, 3
_LOCAL_VOCAB = 2048


class EncoderUnavailableError(RuntimeError):
    pass


class HashTokenizer:
    """Deterministic tokenizer: lowercase word pieces hashed into a fixed vocab."""

    def __init__(self, vocab_size: int = _LOCAL_VOCAB):
        self.vocab_size = vocab_size

    def token_id(self, token: str) -> int:
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        return 4 + int.from_bytes(digest[:4], "big") % (self.vocab_size - 4)

    def encode(self, text: str, max_length: int) -> list[int]:
        tokens = [t for t in "".join(c if c.isalnum() else " " for c in text.lower()).split() if t]
        ids = [_CLS] + [self.token_id(t) for t in tokens] + [_SEP]
        if len(ids) > max_length:
            ids = ids[: max_length - 1] + [_SEP]
        return ids


@dataclass
class Encoder:
    model: torch.nn.Module
    tokenizer: object
    dim: int
    max_length: int
    is_local: bool

    def encode_ids(self, text: str) -> list[int]:
        if self.is_local:
            return self.tokenizer.encode(text, self.max_length)
        return self.tokenizer.encode(text, truncation=True, max_length=self.max_length)


def _local_small(max_length: int, seed: int = 0) -> Encoder:
    config = BertConfig(
        vocab_size=_LOCAL_VOCAB,
        hidden_size=64,
        num_hidden_layers=2,
        num_attention_heads=4,
        intermediate_size=128,
        max_position_embeddings=max_length,
        pad_token_id=_PAD,
    )
    torch.manual_seed(seed)
    model = BertModel(config)
    model.eval()
    return Encoder(model=model, tokenizer=HashTokenizer(), dim=64, max_length=max_length, is_local=True)


def load_encoder(model_id: str = DEFAULT_MODEL, max_length: int = 512) -> Encoder:
    if model_id == LOCAL_SMALL:
        return _local_small(max_length)
    try:
        from transformers import AutoModel, AutoTokenizer

        tokenizer = AutoTokenizer.from_pretrained(model_id)
        model = AutoModel.from_pretrained(model_id)
    except OSError as exc:
        raise EncoderUnavailableError(
            f"cannot load {model_id!r} (no local copy or hub access); "
            f"pass {LOCAL_SMALL!r} for a self-contained encoder"
        ) from exc
    model.eval()
    return Encoder(
        model=model,
        tokenizer=tokenizer,
        dim=model.config.hidden_size,
        max_length=max_length,
        is_local=False,
    )


def batch_ids(encoder: Encoder, texts: list[str]) -> tuple[torch.Tensor, torch.Tensor, int]:
    """Pad a list of texts into (input_ids, attention_mask); returns truncation count."""
    truncated = 0
    all_ids = []
    for text in texts:
        ids = encoder.encode_ids(text)
        if len(ids) >= encoder.max_length:
            truncated += 1
        all_ids.append(ids)
    width = max(len(ids) for ids in all_ids)
    input_ids = torch.full((len(texts), width), _PAD, dtype=torch.long)
    mask = torch.zeros((len(texts), width), dtype=torch.long)
    for i, ids in enumerate(all_ids):
        input_ids[i, : len(ids)] = torch.tensor(ids)
        mask[i, : len(ids)] = 1
    return input_ids, mask, truncated


def mean_pool(hidden: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean over real token positions of the final hidden states."""
    weights = mask.unsqueeze(-1).to(hidden.dtype)
    return (hidden * weights).sum(dim=1) / weights.sum(dim=1)


def encode_texts(encoder: Encoder, texts: list[str], batch_size: int = 32) -> np.ndarray:
    """Deterministic inference-mode embedding, one row per input text."""
    out = np.empty((len(texts), encoder.dim))
    total_truncated = 0
    with torch.no_grad():
        for start in range(0, len(texts), batch_size):
            chunk = texts[start : start + batch_size]
            input_ids, mask, truncated = batch_ids(encoder, chunk)
            total_truncated += truncated
            hidden = encoder.model(input_ids=input_ids, attention_mask=mask).last_hidden_state
            out[start : start + len(chunk)] = mean_pool(hidden, mask).numpy()
    if total_truncated:
        logger.warning("%d of %d texts exceeded max length %d and were truncated",
                       total_truncated, len(texts), encoder.max_length)
    return out
