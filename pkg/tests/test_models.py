from __future__ import annotations

import numpy as np
import pytest

from tracediag.core import BGL, TRACEBENCH, EventRecord, TraceLabel, TraceSlice
from tracediag.graphs import TraceGraph
from tracediag.models import (
    OOV,
    GcnModel,
    LrConfig,
    McvModel,
    gcn_backward,
    gcn_forward,
    gcn_init,
    load_checkpoint,
    lr_train,
    make_batch,
    mcv_build_vocab,
    mcv_vectorize,
    predict_logits,
    save_checkpoint,
)
from tracediag.numerics import (
    adjacency_dense,
    finite_difference_gradient,
    loss_bce_weighted,
    loss_ce_weighted,
    relu,
    sigmoid,
)


def random_graph(rng, n=None, f=5):
    n = n or int(rng.integers(1, 7))
    edges = set()
    for _ in range(int(rng.integers(0, n * 2))):
        s, d = int(rng.integers(n)), int(rng.integers(n))
        if s != d:
            edges.add((s, d))
    return TraceGraph(
        trace_id="g",
        node_ids=[f"e{i}" for i in range(n)],
        edges=sorted(edges),
        features=rng.normal(size=(n, f)),
        label=TraceLabel.normal(),
    )


def dense_forward(model, graph):
    """Straightforward dense oracle for a single graph."""
    batch = make_batch([graph], [0])
    a = adjacency_dense(batch.adjacency)
    h1 = relu(a @ graph.features @ model.w1 + model.b1)
    h2 = relu(a @ h1 @ model.w2 + model.b2)
    return h2.mean(axis=0) @ model.w_out + model.b_out


class TestGcnInit:
    def test_seed_determinism(self):
        a = gcn_init(5, 8, 2, seed=3)
        b = gcn_init(5, 8, 2, seed=3)
        for pa, pb in zip(a._blocks(), b._blocks()):
            assert np.array_equal(pa, pb)

    def test_glorot_bound(self):
        model = gcn_init(5, 64, 1, seed=0)
        bound = np.sqrt(6.0 / 69.0)
        assert np.all(np.abs(model.w1) <= bound)

    def test_biases_zero(self):
        model = gcn_init(4, 6, 3, seed=1)
        assert not model.b1.any() and not model.b2.any() and not model.b_out.any()


class TestGcnForward:
    def test_identity_passthrough(self):
        # single node: normalized adjacency is [1]; identity weights, ones head
        f = 3
        model = GcnModel(
            w1=np.eye(f),
            b1=np.zeros(f),
            w2=np.eye(f),
            b2=np.zeros(f),
            w_out=np.ones((f, 1)),
            b_out=np.zeros(1),
        )
        feats = np.array([[0.5, 1.0, 2.0]])
        g = TraceGraph("g", ["e0"], [], feats, TraceLabel.normal())
        logits, _ = gcn_forward(model, make_batch([g], [0]))
        assert logits[0, 0] == pytest.approx(feats.sum(), abs=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            g = random_graph(rng, n=int(rng.integers(2, 7)))
            model = gcn_init(5, 6, 2, seed=int(rng.integers(1000)))
            logits, _ = gcn_forward(model, make_batch([g], [0]))
            perm = rng.permutation(g.n)
            inv = np.argsort(perm)
            permuted = TraceGraph(
                "g",
                [g.node_ids[i] for i in perm],
                [(int(inv[s]), int(inv[d])) for s, d in g.edges],
                g.features[perm],
                g.label,
            )
            logits_p, _ = gcn_forward(model, make_batch([permuted], [0]))
            assert np.allclose(logits, logits_p, atol=1e-9)

    def test_batch_equivalence(self):
        rng = np.random.default_rng(8)
        graphs = [random_graph(rng) for _ in range(6)]
        model = gcn_init(5, 4, 3, seed=0)
        batched, _ = gcn_forward(model, make_batch(graphs, [0] * 6))
        for i, g in enumerate(graphs):
            single, _ = gcn_forward(model, make_batch([g], [0]))
            assert np.allclose(batched[i], single[0], atol=1e-12)

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            g = random_graph(rng)
            model = gcn_init(5, 4, 2, seed=int(rng.integers(1000)))
            logits, _ = gcn_forward(model, make_batch([g], [0]))
            assert np.allclose(logits[0], dense_forward(model, g), atol=1e-12)

    def test_feature_width_mismatch(self):
        from tracediag.numerics import ShapeError

        g = random_graph(np.random.default_rng(0), f=7)
        with pytest.raises(ShapeError):
            gcn_forward(gcn_init(5, 4, 1, 0), make_batch([g], [0]))


def full_loss(model_template, flat, graphs, labels, k):
    model = model_template.copy()
    model.set_params_flat(flat)
    logits, _ = gcn_forward(model, make_batch(graphs, list(labels)))
    if k == 1:
        loss, _ = loss_bce_weighted(logits[:, 0], np.asarray(labels, dtype=float), 1.3)
    else:
        loss, _ = loss_ce_weighted(logits, np.asarray(labels), np.ones(k))
    return loss


class TestGcnBackward:
    def test_zero_dlogits(self):
        rng = np.random.default_rng(10)
        g = random_graph(rng)
        model = gcn_init(5, 4, 2, seed=0)
        _, cache = gcn_forward(model, make_batch([g], [0]))
        grads = gcn_backward(model, cache, np.zeros((1, 2)))
        assert not grads.params_flat().any()

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(11)
        for trial in range(10):
            k = 1 if trial % 2 == 0 else 3
            graphs = [random_graph(rng, n=int(rng.integers(1, 5))) for _ in range(3)]
            labels = [int(rng.integers(0, max(2, k))) if k > 1 else int(rng.integers(0, 2)) for _ in range(3)]
            model = gcn_init(5, 3, k, seed=trial)
            # nonzero biases keep pre-activations off the exact ReLU kink,
            # where central differences and the subgradient legitimately differ
            model.b1[:] = rng.normal(scale=0.1, size=model.b1.shape)
            model.b2[:] = rng.normal(scale=0.1, size=model.b2.shape)
            batch = make_batch(graphs, labels)
            logits, cache = gcn_forward(model, batch)
            if k == 1:
                _, dlogits = loss_bce_weighted(logits[:, 0], np.asarray(labels, dtype=float), 1.3)
                dlogits = dlogits[:, None]
            else:
                _, dlogits = loss_ce_weighted(logits, np.asarray(labels), np.ones(k))
            analytic = gcn_backward(model, cache, dlogits).params_flat()
            numeric = finite_difference_gradient(
                lambda flat: full_loss(model, flat, graphs, labels, k), model.params_flat(), 1e-5
            )
            denom = np.maximum(np.abs(numeric), 1e-4)
            assert np.max(np.abs(analytic - numeric) / denom) < 1e-4

    def test_duplicate_graph_doubles_gradient(self):
        rng = np.random.default_rng(12)
        g = random_graph(rng, n=4)
        model = gcn_init(5, 3, 1, seed=2)

        def grads_for(graphs, labels):
            batch = make_batch(graphs, labels)
            logits, cache = gcn_forward(model, batch)
            # sum-of-losses so contributions add instead of averaging
            p = sigmoid(logits[:, 0])
            dlogits = (p - np.asarray(labels, dtype=float))[:, None]
            return gcn_backward(model, cache, dlogits).params_flat()

        single = grads_for([g], [1])
        double = grads_for([g, g], [1, 1])
        assert np.allclose(double, 2 * single, atol=1e-10)


def mk_slice(keys, kind=TRACEBENCH):
    events = []
    for i, key in enumerate(keys):
        op = key if kind == TRACEBENCH else ""
        desc = "d" if kind == TRACEBENCH else key
        events.append(EventRecord(f"e{i}", "t", i, op, desc, i))
    return TraceSlice("t", events, [])


class TestMcv:
    def test_vocab_sorted_dedup(self):
        vocab = mcv_build_vocab([mk_slice(["b", "a", "a"])], TRACEBENCH)
        assert vocab == ["a", "b", OOV]

    def test_empty_training_set(self):
        assert mcv_build_vocab([], TRACEBENCH) == [OOV]

    def test_vectorize_counts(self):
        vocab = ["a", "b", OOV]
        assert mcv_vectorize(mk_slice(["a", "a", "b"]), vocab, TRACEBENCH).tolist() == [2.0, 1.0, 0.0]

    def test_oov(self):
        vocab = ["a", "b", OOV]
        assert mcv_vectorize(mk_slice(["c"]), vocab, TRACEBENCH).tolist() == [0.0, 0.0, 1.0]

    def test_oov_only_vocab(self):
        assert mcv_vectorize(mk_slice(["x", "y", "z"]), [OOV], TRACEBENCH).tolist() == [3.0]

    def test_unseen_key_maps_to_oov(self):
        vocab = mcv_build_vocab([mk_slice(["a"])], TRACEBENCH)
        vec = mcv_vectorize(mk_slice(["validation-only"]), vocab, TRACEBENCH)
        assert vec[-1] == 1.0

    def test_bgl_keys_use_template(self):
        vocab = mcv_build_vocab([mk_slice(["tmpl1", "tmpl2"], kind=BGL)], BGL)
        assert "tmpl1" in vocab

    def test_vector_sums_to_event_count(self):
        rng = np.random.default_rng(13)
        vocab = mcv_build_vocab([mk_slice(["a", "b", "c"])], TRACEBENCH)
        for _ in range(20):
            keys = [rng.choice(["a", "b", "c", "d", "e"]) for _ in range(int(rng.integers(1, 10)))]
            assert mcv_vectorize(mk_slice(keys), vocab, TRACEBENCH).sum() == len(keys)


class TestLrTrain:
    def separable(self):
        rng = np.random.default_rng(0)
        n = 20
        x0 = np.column_stack([rng.uniform(0, 1, n // 2), rng.uniform(0, 5, n // 2)])
        x1 = np.column_stack([rng.uniform(2, 3, n // 2), rng.uniform(0, 5, n // 2)])
        return np.vstack([x0, x1]), np.array([0] * (n // 2) + [1] * (n // 2))

    def test_separable_reaches_perfect_f1(self):
        x, y = self.separable()
        model, _ = lr_train(x, y, np.array([1.0]), LrConfig(epochs=200, lr=0.05, weight_decay=0.0))
        preds = predict_logits(x @ model.w + model.b, "ad")
        assert np.array_equal(preds, y)

    def test_single_class_predicts_it(self):
        x = np.random.default_rng(1).normal(size=(10, 3))
        y = np.ones(10, dtype=int)
        model, _ = lr_train(x, y, np.array([1.0]), LrConfig(epochs=100, lr=0.05, weight_decay=0.0))
        assert np.all(predict_logits(x @ model.w + model.b, "ad") == 1)

    def test_loss_non_increasing(self):
        x, y = self.separable()
        _, losses = lr_train(x, y, np.array([1.0]), LrConfig(epochs=200, lr=0.05, weight_decay=0.0))
        assert np.all(np.diff(losses) <= 1e-9)

    def test_multiclass(self):
        rng = np.random.default_rng(2)
        x = np.vstack([rng.normal(loc=c * 4, size=(15, 2)) for c in range(3)])
        y = np.repeat(np.arange(3), 15)
        model, _ = lr_train(x, y, np.ones(3), LrConfig(epochs=300, lr=0.05, weight_decay=0.0))
        preds = predict_logits(x @ model.w + model.b, "fc")
        assert (preds == y).mean() > 0.95


class TestPredict:
    def test_boundary_logit_zero_is_normal(self):
        assert predict_logits(np.array([0.0]), "ad").tolist() == [0]

    def test_argmax_tie_breaks_low(self):
        assert predict_logits(np.array([[2.0, 2.0, 1.0]]), "fc").tolist() == [0]

    def test_sigmoid_three_abnormal(self):
        assert predict_logits(np.array([3.0]), "ad").tolist() == [1]


class TestCheckpoints:
    def test_gcn_roundtrip(self, tmp_path):
        model = gcn_init(5, 4, 2, seed=5)
        save_checkpoint(tmp_path / "c.json", model, {"task": "fc"})
        back, meta = load_checkpoint(tmp_path / "c.json")
        assert meta["task"] == "fc"
        for a, b in zip(model._blocks(), back._blocks()):
            assert np.array_equal(a, b)

    def test_mcv_roundtrip(self, tmp_path):
        model = McvModel(vocab=["a", OOV], w=np.array([[0.1], [0.2]]), b=np.array([0.3]))
        save_checkpoint(tmp_path / "c.json", model)
        back, _ = load_checkpoint(tmp_path / "c.json")
        assert back.vocab == model.vocab
        assert np.array_equal(back.w, model.w) and np.array_equal(back.b, model.b)
