from __future__ import annotations

import numpy as np
import pytest

from embed_exporter.encoder import (
    LOCAL_SMALL,
    EncoderUnavailableError,
    HashTokenizer,
    batch_ids,
    encode_texts,
    load_encoder,
)


@pytest.fixture(scope="module")
def encoder():
    return load_encoder(LOCAL_SMALL, max_length=128)


class TestHashTokenizer:
    def test_deterministic(self):
        tok = HashTokenizer()
        assert tok.encode("read block ok", 64) == tok.encode("read block ok", 64)

    def test_ids_in_vocab(self):
        tok = HashTokenizer()
        ids = tok.encode("op3:step 3 completed", 64)
        assert all(0 <= i < tok.vocab_size for i in ids)

    def test_empty_text_markers_only(self):
        ids = HashTokenizer().encode("", 64)
        assert ids == [1, 2]  # [CLS] [SEP]

    def test_truncation_keeps_sep(self):
        ids = HashTokenizer().encode(" ".join(f"w{i}" for i in range(200)), 64)
        assert len(ids) == 64 and ids[-1] == 2


class TestBatchIds:
    def test_padding_and_mask(self, encoder):
        input_ids, mask, truncated = batch_ids(encoder, ["a b c", "a"])
        assert input_ids.shape == mask.shape
        assert mask[0].sum() == 5 and mask[1].sum() == 3
        assert truncated == 0

    def test_truncation_counted(self, encoder):
        long = " ".join(f"w{i}" for i in range(500))
        _, _, truncated = batch_ids(encoder, [long, "short"])
        assert truncated == 1


class TestEncodeTexts:
    def test_shape_and_determinism(self, encoder):
        texts = ["read:ok", "close:done", ""]
        a = encode_texts(encoder, texts)
        b = encode_texts(encoder, texts)
        assert a.shape == (3, encoder.dim)
        assert np.array_equal(a, b)
        assert np.all(np.isfinite(a))

    def test_batching_invariant(self, encoder):
        texts = [f"op{i}:step {i}" for i in range(10)]
        whole = encode_texts(encoder, texts, batch_size=10)
        split = encode_texts(encoder, texts, batch_size=3)
        assert np.allclose(whole, split, atol=1e-6)

    def test_empty_text_row_emitted(self, encoder):
        out = encode_texts(encoder, [""])
        assert out.shape == (1, encoder.dim) and np.all(np.isfinite(out))

    def test_distinct_texts_distinct_vectors(self, encoder):
        out = encode_texts(encoder, ["read:ok", "ERR unexpected fault token alpha"])
        assert not np.allclose(out[0], out[1])


class TestLoadEncoder:
    def test_local_small_reproducible(self):
        a = load_encoder(LOCAL_SMALL, max_length=64)
        b = load_encoder(LOCAL_SMALL, max_length=64)
        pa = dict(a.model.named_parameters())
        pb = dict(b.model.named_parameters())
        assert all((pa[k] == pb[k]).all() for k in pa)

    def test_unresolvable_identifier(self):
        with pytest.raises(EncoderUnavailableError, match="local-small"):
            load_encoder("no-such-model-anywhere")
