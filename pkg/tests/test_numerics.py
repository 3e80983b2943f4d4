from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracediag.numerics import (
    AdamWState,
    DomainError,
    ShapeError,
    adamw_step,
    adjacency_dense,
    apply_adjacency,
    finite_difference_gradient,
    loss_bce_weighted,
    loss_ce_weighted,
    noisy_or,
    normalize_adjacency,
    relu,
    sigmoid,
    softmax,
)


class TestNormalizeAdjacency:
    def test_isolated_node(self):
        adj = normalize_adjacency([], 1, symmetrize=True)
        assert adjacency_dense(adj).tolist() == [[1.0]]

    def test_two_nodes_symmetric(self):
        adj = normalize_adjacency([(0, 1)], 2, symmetrize=True)
        dense = adjacency_dense(adj)
        assert np.allclose(dense, 0.5)

    def test_three_chain(self):
        adj = normalize_adjacency([(0, 1), (1, 2)], 3, symmetrize=True)
        dense = adjacency_dense(adj)
        # degrees with self-loops: (2, 3, 2)
        assert dense[0, 1] == pytest.approx(1 / math.sqrt(6))
        assert dense[1, 1] == pytest.approx(1 / 3)
        assert dense[0, 0] == pytest.approx(0.5)

    def test_symmetry_and_positivity(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(1, 8))
            edges = [(int(rng.integers(n)), int(rng.integers(n))) for _ in range(int(rng.integers(0, 10)))]
            edges = [(s, d) for s, d in edges if s != d]
            adj = normalize_adjacency(edges, n, symmetrize=True)
            dense = adjacency_dense(adj)
            assert np.allclose(dense, dense.T)
            assert np.all(adj.weights > 0)
            assert np.all(np.diag(dense) > 0)  # self-loop per node

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            normalize_adjacency([(0, 5)], 2, symmetrize=True)


class TestApplyAdjacency:
    def test_identity(self):
        adj = normalize_adjacency([], 3, symmetrize=True)
        x = np.arange(6, dtype=float).reshape(3, 2)
        assert np.array_equal(apply_adjacency(adj, x), x)

    def test_hand_product(self):
        adj = normalize_adjacency([(0, 1)], 2, symmetrize=True)
        y = apply_adjacency(adj, np.array([[2.0], [4.0]]))
        assert np.allclose(y, [[3.0], [3.0]])

    def test_zero_cols(self):
        adj = normalize_adjacency([], 2, symmetrize=True)
        assert apply_adjacency(adj, np.zeros((2, 0))).shape == (2, 0)

    def test_shape_mismatch(self):
        adj = normalize_adjacency([], 2, symmetrize=True)
        with pytest.raises(ShapeError):
            apply_adjacency(adj, np.zeros((3, 1)))

    def test_matches_dense_product(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            n = int(rng.integers(1, 7))
            edges = [(int(rng.integers(n)), int(rng.integers(n))) for _ in range(5)]
            edges = [(s, d) for s, d in edges if s != d]
            adj = normalize_adjacency(edges, n, symmetrize=True)
            x = rng.normal(size=(n, 3))
            assert np.allclose(apply_adjacency(adj, x), adjacency_dense(adj) @ x, atol=1e-12)


class TestActivations:
    def test_relu(self):
        assert relu(np.array([-3.0, 0.0, 5.0])).tolist() == [0.0, 0.0, 5.0]

    def test_sigmoid_zero(self):
        assert sigmoid(np.array([0.0]))[0] == 0.5

    def test_softmax_stabilized(self):
        out = softmax(np.array([[1000.0, 1000.0]]))
        assert np.allclose(out, 0.5)

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(-1e4, 1e4, size=(50, 7))
        assert np.allclose(softmax(x).sum(axis=1), 1.0, atol=1e-12)


class TestBceLoss:
    def test_logit_zero_positive(self):
        loss, _ = loss_bce_weighted(np.array([0.0]), np.array([1.0]), 1.0)
        assert loss == pytest.approx(math.log(2), abs=1e-12)

    def test_logit_zero_negative_gradient(self):
        loss, d = loss_bce_weighted(np.array([0.0]), np.array([0.0]), 1.0)
        assert loss == pytest.approx(math.log(2), abs=1e-12)
        assert d[0] == pytest.approx(0.5, abs=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(1, 6))
            z = rng.normal(scale=2.0, size=n)
            y = rng.integers(0, 2, size=n).astype(float)
            w = float(rng.uniform(0.2, 5.0))
            _, analytic = loss_bce_weighted(z, y, w)
            numeric = finite_difference_gradient(lambda v: loss_bce_weighted(v, y, w)[0], z.copy(), 1e-5)
            assert np.allclose(analytic, numeric, rtol=1e-6, atol=1e-9)

    def test_large_logits_stable(self):
        loss, d = loss_bce_weighted(np.array([500.0, -500.0]), np.array([0.0, 1.0]), 2.0)
        assert np.isfinite(loss) and np.all(np.isfinite(d))


class TestCeLoss:
    def test_uniform_binary(self):
        loss, _ = loss_ce_weighted(np.array([[0.0, 0.0]]), np.array([0]), np.array([1.0, 1.0]))
        assert loss == pytest.approx(math.log(2), abs=1e-12)

    def test_uniform_weights_reduce_to_unweighted(self):
        rng = np.random.default_rng(4)
        z = rng.normal(size=(6, 4))
        y = rng.integers(0, 4, size=6)
        w_loss, w_grad = loss_ce_weighted(z, y, np.full(4, 3.7))
        u_loss, u_grad = loss_ce_weighted(z, y, np.ones(4))
        assert w_loss == pytest.approx(u_loss, abs=1e-12)
        assert np.allclose(w_grad, u_grad, atol=1e-12)

    def test_label_out_of_range(self):
        with pytest.raises(IndexError):
            loss_ce_weighted(np.zeros((1, 2)), np.array([5]), np.ones(2))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            b, k = int(rng.integers(1, 5)), int(rng.integers(2, 5))
            z = rng.normal(scale=2.0, size=(b, k))
            y = rng.integers(0, k, size=b)
            w = rng.uniform(0.2, 5.0, size=k)
            _, analytic = loss_ce_weighted(z, y, w)
            numeric = finite_difference_gradient(lambda v: loss_ce_weighted(v, y, w)[0], z.copy(), 1e-5)
            assert np.allclose(analytic, numeric, rtol=1e-6, atol=1e-9)


class TestAdamW:
    def test_zero_grad_no_decay_identity(self):
        state = AdamWState.for_params(3, weight_decay=0.0)
        params = np.array([1.0, -2.0, 3.0])
        out = adamw_step(params, np.zeros(3), state)
        assert np.array_equal(out, params)
        assert state.step == 1

    def test_first_step_hand_evaluated(self):
        state = AdamWState.for_params(1, lr=1e-3, weight_decay=0.01)
        out = adamw_step(np.array([1.0]), np.array([0.5]), state)
        assert out[0] == pytest.approx(0.998990, abs=1e-6)

    def test_decay_only(self):
        state = AdamWState.for_params(1, lr=1e-3, weight_decay=0.1)
        out = adamw_step(np.array([2.0]), np.array([0.0]), state)
        assert out[0] == pytest.approx(1.9998, abs=1e-12)

    def test_decay_contracts_norm(self):
        state = AdamWState.for_params(4, lr=1e-2, weight_decay=0.5)
        params = np.array([3.0, -1.0, 2.0, 0.5])
        out = adamw_step(params, np.zeros(4), state)
        assert np.linalg.norm(out) < np.linalg.norm(params)

    def test_step_increments(self):
        state = AdamWState.for_params(1)
        p = np.array([0.0])
        for expected in (1, 2, 3):
            p = adamw_step(p, np.array([0.1]), state)
            assert state.step == expected

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            adamw_step(np.zeros(2), np.zeros(3), AdamWState.for_params(2))


class TestNoisyOr:
    def test_all_zero(self):
        assert noisy_or([0.0, 0.0, 0.0]) == 0.0

    def test_absorbing_one(self):
        assert noisy_or([1.0, 0.2]) == 1.0

    def test_half_half(self):
        assert noisy_or([0.5, 0.5]) == 0.75

    def test_empty_raises(self):
        with pytest.raises(DomainError):
            noisy_or([])

    def test_out_of_range_raises(self):
        with pytest.raises(DomainError):
            noisy_or([0.5, 1.2])

    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=10))
    @settings(max_examples=200, deadline=None)
    def test_properties(self, scores):
        value = noisy_or(scores)
        assert 0.0 <= value <= 1.0
        if len(scores) == 1:
            assert value == pytest.approx(scores[0], abs=1e-15)
        # monotone non-decreasing in every coordinate
        for i in range(len(scores)):
            bumped = list(scores)
            bumped[i] = min(1.0, bumped[i] + 0.1)
            assert noisy_or(bumped) >= value - 1e-12


class TestFiniteDifference:
    def test_square(self):
        g = finite_difference_gradient(lambda x: float(x[0] ** 2), np.array([3.0]), 1e-5)
        assert g[0] == pytest.approx(6.0, abs=1e-6)

    def test_constant(self):
        g = finite_difference_gradient(lambda x: 7.0, np.array([1.0, 2.0]), 1e-5)
        assert np.array_equal(g, np.zeros(2))

    def test_sum_of_squares(self):
        g = finite_difference_gradient(lambda x: float(np.sum(x**2)), np.array([1.0, 2.0]), 1e-5)
        assert np.allclose(g, [2.0, 4.0], atol=1e-6)
