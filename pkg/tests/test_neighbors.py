import logging

import numpy as np
import pytest

from nformer.counters import MacCounter
from nformer.exceptions import ParameterError, ShapeError
from nformer.neighbors import (
    NeighborMask,
    aggregate_dense,
    aggregate_sparse,
    mask_query_query,
    reciprocal_mask,
    rns_weights,
    topk_mask,
)


def full_sort_topk_oracle(values, k):
    """Row-wise top-k sets by full sort; ties to the smallest index."""
    n = values.shape[0]
    rows = []
    for i in range(n):
        order = sorted(range(n), key=lambda j: (-values[i, j], j))
        rows.append(np.array(sorted(order[:k])))
    return rows


def masked_softmax_oracle(values, dense_mask, sign=1):
    """Dense row softmax restricted to the mask support."""
    n = values.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        sup = np.flatnonzero(dense_mask[i])
        if sup.size == 0:
            out[i, i] = 1.0
            continue
        scores = sign * values[i, sup]
        e = np.exp(scores - scores.max())
        out[i, sup] = e / e.sum()
    return out


class TestTopkMask:
    def test_k_equals_n_all_true(self):
        values = np.random.default_rng(0).normal(size=(5, 5))
        mask = topk_mask(values, 5)
        assert mask.dense().all()

    def test_dominant_diagonal_k1(self):
        values = np.full((4, 4), 0.1)
        np.fill_diagonal(values, 1.0)
        mask = topk_mask(values, 1)
        np.testing.assert_array_equal(mask.dense(), np.eye(4, dtype=bool))

    def test_matches_full_sort_oracle(self):
        values = np.random.default_rng(1).normal(size=(8, 8))
        mask = topk_mask(values, 3, include_self=False)
        for got, want in zip(mask.rows, full_sort_topk_oracle(values, 3)):
            np.testing.assert_array_equal(got, want)

    def test_include_self_forces_diagonal(self):
        # Row 0's natural top-2 excludes the self entry; the policy swaps
        # the weakest pick for it.
        values = np.array([
            [0.0, 5.0, 4.0],
            [0.1, 9.0, 0.2],
            [8.0, 7.0, 0.0],
        ])
        mask = topk_mask(values, 2).dense()
        assert mask[0, 0] and mask[0, 1] and not mask[0, 2]
        assert mask.diagonal().all()

    def test_include_self_counts_toward_k(self):
        values = np.random.default_rng(2).normal(size=(6, 6))
        mask = topk_mask(values, 3)
        for row in mask.rows:
            assert row.size == 3

    def test_k_out_of_range(self):
        with pytest.raises(ParameterError):
            topk_mask(np.eye(3), 4)


class TestReciprocalMask:
    def test_hand_example(self):
        values = np.array([
            [1.0, 0.9, 0.1],
            [0.9, 1.0, 0.2],
            [0.1, 0.2, 1.0],
        ])
        m = reciprocal_mask(topk_mask(values, 2))
        want = np.array([
            [True, True, False],
            [True, True, False],
            [False, False, True],
        ])
        np.testing.assert_array_equal(m.dense(), want)

    def test_symmetric_mask_is_fixed_point(self):
        dense = np.array([
            [True, True, False],
            [True, True, True],
            [False, True, True],
        ])
        mk = NeighborMask.from_dense(dense, k=2)
        np.testing.assert_array_equal(reciprocal_mask(mk).dense(), dense)

    def test_all_true(self):
        mk = NeighborMask.from_dense(np.ones((4, 4), dtype=bool), k=4)
        assert reciprocal_mask(mk).dense().all()

    def test_always_symmetric(self):
        rng = np.random.default_rng(3)
        for trial in range(10):
            values = rng.normal(size=(10, 10))
            m = reciprocal_mask(topk_mask(values, int(rng.integers(1, 11)))).dense()
            np.testing.assert_array_equal(m, m.T)

    def test_support_subset_of_topk(self):
        rng = np.random.default_rng(4)
        values = rng.normal(size=(12, 12))
        mk = topk_mask(values, 4)
        m = reciprocal_mask(mk)
        assert not (m.dense() & ~mk.dense()).any()


class TestRnsWeights:
    def test_self_only_support(self):
        values = np.zeros((3, 3))
        mask = NeighborMask.from_dense(np.eye(3, dtype=bool), k=1)
        att = rns_weights(values, mask)
        np.testing.assert_allclose(att.dense(), np.eye(3))

    def test_equal_affinities_split_evenly(self):
        values = np.zeros((2, 2))
        mask = NeighborMask.from_dense(np.ones((2, 2), dtype=bool), k=2)
        att = rns_weights(values, mask)
        np.testing.assert_allclose(att.dense(), np.full((2, 2), 0.5))

    def test_single_row(self):
        att = rns_weights(np.array([[3.0]]), NeighborMask.from_dense(np.eye(1, dtype=bool), k=1))
        np.testing.assert_allclose(att.dense(), [[1.0]])

    def test_matches_masked_softmax_oracle(self):
        rng = np.random.default_rng(5)
        for sign in (1, -1):
            values = rng.normal(size=(6, 6))
            mask = reciprocal_mask(topk_mask(values, 2))
            att = rns_weights(values, mask, sign=sign)
            np.testing.assert_allclose(
                att.dense(), masked_softmax_oracle(values, mask.dense(), sign), atol=1e-12
            )

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(6)
        values = 50.0 * rng.normal(size=(20, 20))  # large scores: overflow-safe path
        att = rns_weights(values, reciprocal_mask(topk_mask(values, 5)))
        for cols, weights in att.rows:
            assert abs(weights.sum() - 1.0) <= 1e-12
            assert np.all(weights > 0) and np.all(weights <= 1)
            assert np.all(np.diff(cols) > 0)

    def test_empty_support_falls_back_to_self(self, caplog):
        # Directed 3-cycle of nearest neighbors: without the self policy no
        # pair is mutual, so every row falls back to identity.
        values = np.array([
            [0.0, 1.0, -1.0],
            [-1.0, 0.0, 1.0],
            [1.0, -1.0, 0.0],
        ])
        mask = reciprocal_mask(topk_mask(values, 1, include_self=False))
        with caplog.at_level(logging.WARNING, logger="nformer.neighbors"):
            att = rns_weights(values, mask)
        np.testing.assert_allclose(att.dense(), np.eye(3))
        assert any("reciprocal" in rec.message for rec in caplog.records)

    def test_bad_sign(self):
        with pytest.raises(ParameterError):
            rns_weights(np.eye(2), NeighborMask.from_dense(np.eye(2, dtype=bool), k=1), sign=0)


class TestAggregation:
    def test_identity_attention(self):
        v = np.random.default_rng(7).normal(size=(4, 3))
        att = rns_weights(np.zeros((4, 4)), NeighborMask.from_dense(np.eye(4, dtype=bool), k=1))
        np.testing.assert_allclose(aggregate_sparse(att, v), v)

    def test_two_point_average(self):
        v = np.array([[2.0, 0.0], [0.0, 2.0]])
        att = rns_weights(np.zeros((2, 2)), NeighborMask.from_dense(np.ones((2, 2), dtype=bool), k=2))
        np.testing.assert_allclose(aggregate_sparse(att, v), np.ones((2, 2)))

    def test_sparse_equals_dense_oracle(self):
        rng = np.random.default_rng(8)
        for trial in range(10):
            n = int(rng.integers(2, 30))
            d = int(rng.integers(1, 9))
            k = int(rng.integers(1, n + 1))
            values = rng.normal(size=(n, n))
            v = rng.normal(size=(n, d))
            mask = reciprocal_mask(topk_mask(values, k))
            att = rns_weights(values, mask)
            dense_weights = masked_softmax_oracle(values, mask.dense())
            np.testing.assert_allclose(
                aggregate_sparse(att, v), dense_weights @ v, atol=1e-10
            )

    def test_sparse_mac_bound(self):
        rng = np.random.default_rng(9)
        n, d, k = 25, 6, 4
        values = rng.normal(size=(n, n))
        v = rng.normal(size=(n, d))
        att = rns_weights(values, reciprocal_mask(topk_mask(values, k)))
        counter = MacCounter()
        aggregate_sparse(att, v, counter=counter)
        assert counter.get("sparse_aggregate") <= n * k * d

    def test_dense_identity(self):
        v = np.random.default_rng(10).normal(size=(3, 2))
        np.testing.assert_allclose(aggregate_dense(np.eye(3), v), v)

    def test_dense_uniform_weights(self):
        v = np.random.default_rng(11).normal(size=(5, 3))
        weights = np.full((5, 5), 1.0 / 5.0)
        out = aggregate_dense(weights, v)
        np.testing.assert_allclose(out, np.tile(v.mean(axis=0), (5, 1)), atol=1e-12)

    def test_dense_counter(self):
        counter = MacCounter()
        aggregate_dense(np.eye(4), np.ones((4, 7)), counter=counter)
        assert counter.get("dense_aggregate") == 4 * 4 * 7

    def test_dense_matches_matmul(self):
        rng = np.random.default_rng(12)
        w = rng.normal(size=(6, 6))
        v = rng.normal(size=(6, 4))
        np.testing.assert_allclose(aggregate_dense(w, v), w @ v)

    def test_shape_errors(self):
        with pytest.raises(ShapeError):
            aggregate_dense(np.eye(3), np.ones((4, 2)))
        att = rns_weights(np.zeros((2, 2)), NeighborMask.from_dense(np.eye(2, dtype=bool), k=1))
        with pytest.raises(ShapeError):
            aggregate_sparse(att, np.ones((3, 2)))


class TestQueryQueryMasking:
    def test_distinct_queries_disconnected(self):
        dense = np.ones((4, 4), dtype=bool)
        mask = NeighborMask.from_dense(dense, k=4)
        is_query = np.array([True, True, False, False])
        out = mask_query_query(mask, is_query).dense()
        assert not out[0, 1] and not out[1, 0]
        assert out[0, 0] and out[1, 1]          # self entries survive
        assert out[0, 2] and out[2, 1]          # query-gallery intact
        np.testing.assert_array_equal(out[2:], dense[2:])  # gallery rows untouched
