import numpy as np
import pytest

from nformer.attention import LandmarkSet, ProjectionSet, sample_landmarks
from nformer.exceptions import ConfigError, ParameterError, ShapeError
from nformer.linalg import l2_normalize_rows
from nformer.stack import (
    LayerWeights,
    NFormerConfig,
    identity_weights,
    nformer_forward,
    nformer_layer,
    random_weights,
)


def dense_softmax_rows(scores):
    e = np.exp(scores - scores.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def clustered(seed, n=48, d=8, p=6, sigma=0.2):
    rng = np.random.default_rng(seed)
    cent = l2_normalize_rows(rng.normal(size=(p, d)))
    z = np.repeat(cent, n // p, axis=0) + sigma * rng.normal(size=(n, d)) / np.sqrt(d)
    return l2_normalize_rows(z), np.repeat(np.arange(p), n // p)


class TestLayer:
    def test_single_sample_attends_only_to_itself(self):
        z = np.array([[0.3, -0.7, 0.2]])
        cfg = NFormerConfig(d=3, layers=1, n_landmarks=1, n_neighbors=1)
        out = nformer_layer(z, LayerWeights.identity(3), cfg)
        # One sample attends only to itself: u = z, the additive residual
        # doubles the scale, and the zeroed feed-forward adds nothing.
        # The direction is unchanged.
        np.testing.assert_allclose(out, 2 * z)
        np.testing.assert_allclose(out / np.linalg.norm(out), z / np.linalg.norm(z))

    def test_single_sample_no_residual(self):
        z = np.array([[0.3, -0.7, 0.2]])
        cfg = NFormerConfig(d=3, layers=1, n_landmarks=1, n_neighbors=1, residual=False)
        out = nformer_layer(z, LayerWeights.identity(3), cfg)
        np.testing.assert_allclose(out, np.zeros_like(z))  # FF(u) with ff2 = 0

    def test_full_k_matches_dense_softmax_oracle(self):
        # k = n keeps every pair, so the attention sub-block must equal a
        # full softmax over the landmark affinity, composed independently.
        rng = np.random.default_rng(0)
        n, d, l = 10, 4, 3
        z = rng.normal(size=(n, d))
        lm = sample_landmarks(n, l, seed=1)
        cfg = NFormerConfig(d=d, layers=1, n_landmarks=l, n_neighbors=n, residual=False)
        out = nformer_layer(z, LayerWeights.identity(d), cfg, landmarks=lm)
        approx = (z @ z[lm.indices].T) @ (z @ z[lm.indices].T).T / np.sqrt(d)
        want = dense_softmax_rows(approx) @ z
        # ff2 = 0 makes the layer output 0 without residual; rebuild the
        # attention sub-block with an identity-passing feed-forward off.
        cfg_resid = NFormerConfig(d=d, layers=1, n_landmarks=l, n_neighbors=n)
        out = nformer_layer(z, LayerWeights.identity(d), cfg_resid, landmarks=lm)
        np.testing.assert_allclose(out, z + want, atol=1e-9)

    def test_dense_mode_matches_plain_attention(self):
        # With the dense affinity route and k = n, the attention sub-block
        # is a plain single-head attention layer.
        rng = np.random.default_rng(1)
        n, d = 12, 6
        z = rng.normal(size=(n, d))
        w = LayerWeights(
            projections=ProjectionSet.random(d, seed=2),
            ff1=np.eye(d), b1=np.zeros(d), ff2=np.zeros((d, d)), b2=np.zeros(d),
        )
        cfg = NFormerConfig(d=d, layers=1, n_neighbors=n, affinity_mode="dense")
        out = nformer_layer(z, w, cfg)
        q = z @ w.projections.w_q
        k = z @ w.projections.w_k
        v = z @ w.projections.w_v
        plain = dense_softmax_rows(q @ k.T / np.sqrt(d)) @ v
        np.testing.assert_allclose(out, z + plain, atol=1e-9)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(2)
        z = rng.normal(size=(16, 8))
        lm = sample_landmarks(16, 4, seed=3)
        cfg = NFormerConfig(d=8, layers=1, n_landmarks=4, n_neighbors=5)
        w = LayerWeights.random(8, seed=4)
        out = nformer_layer(z, w, cfg, landmarks=lm)

        perm = rng.permutation(16)
        inv = np.argsort(perm)
        lm_perm = LandmarkSet(indices=inv[lm.indices])
        out_perm = nformer_layer(z[perm], w, cfg, landmarks=lm_perm)
        np.testing.assert_allclose(out_perm, out[perm], atol=1e-10)

    def test_feedforward_applied(self):
        z = np.array([[1.0, -1.0]])
        w = LayerWeights(
            projections=ProjectionSet.identity(2),
            ff1=np.eye(2), b1=np.zeros(2), ff2=np.eye(2), b2=np.array([0.5, 0.5]),
        )
        cfg = NFormerConfig(d=2, layers=1, n_landmarks=1, n_neighbors=1, residual=False)
        out = nformer_layer(z, w, cfg)
        # u = z (self attention only), FF = relu(u) @ I + b.
        np.testing.assert_allclose(out, [[1.5, 0.5]])

    def test_within_cluster_variance_shrinks(self):
        # Aggregation-only layer (no residual, zero FF): neighbor averaging
        # must tighten every cluster.
        for seed in range(20):
            z, labels = clustered(seed)
            cfg = NFormerConfig(d=8, layers=1, n_neighbors=8, residual=False,
                                affinity_mode="dense", seed=seed)
            out = nformer_layer(z, LayerWeights.identity(8), cfg)

            def within(x):
                return np.mean([
                    ((x[labels == c] - x[labels == c].mean(axis=0)) ** 2).sum(axis=1).mean()
                    for c in np.unique(labels)
                ])

            assert within(out) < within(z)


class TestForward:
    def test_zero_layers_is_identity(self):
        z = np.random.default_rng(5).normal(size=(6, 4))
        cfg = NFormerConfig(d=4, layers=0)
        out = nformer_forward(z, [], cfg)
        np.testing.assert_array_equal(out, z)
        assert out is not z

    def test_two_layers_equal_manual_composition(self):
        rng = np.random.default_rng(6)
        z = rng.normal(size=(14, 5))
        cfg = NFormerConfig(d=5, layers=2, n_landmarks=3, n_neighbors=4, seed=9)
        weights = [LayerWeights.random(5, seed=s) for s in (10, 11)]
        out = nformer_forward(z, weights, cfg)

        lm = sample_landmarks(14, 3, seed=9)  # shared policy: one draw
        step = nformer_layer(z, weights[0], cfg, landmarks=lm)
        step = nformer_layer(step, weights[1], cfg, landmarks=lm)
        np.testing.assert_array_equal(out, step)

    def test_deterministic_across_runs(self):
        rng = np.random.default_rng(7)
        z = rng.normal(size=(20, 6))
        cfg = NFormerConfig(d=6, layers=3, n_landmarks=2, n_neighbors=5, seed=42)
        weights = random_weights(6, 3, seed=0)
        a = nformer_forward(z, weights, cfg)
        b = nformer_forward(z, weights, cfg)
        assert a.tobytes() == b.tobytes()

    def test_per_layer_policy_differs_from_shared(self):
        rng = np.random.default_rng(8)
        z = rng.normal(size=(30, 4))
        weights = identity_weights(4, 2)
        shared = nformer_forward(z, weights, NFormerConfig(d=4, layers=2, n_landmarks=2,
                                                           n_neighbors=3, seed=1))
        per_layer = nformer_forward(z, weights, NFormerConfig(d=4, layers=2, n_landmarks=2,
                                                              n_neighbors=3, seed=1,
                                                              landmark_policy="per_layer"))
        assert shared.shape == per_layer.shape == (30, 4)

    def test_shape_preserved(self):
        for layers in (1, 2, 4):
            z = np.random.default_rng(layers).normal(size=(9, 3))
            cfg = NFormerConfig(d=3, layers=layers, n_landmarks=2, n_neighbors=3)
            out = nformer_forward(z, identity_weights(3, layers), cfg)
            assert out.shape == (9, 3)

    def test_weight_count_mismatch(self):
        cfg = NFormerConfig(d=3, layers=2)
        with pytest.raises(ConfigError):
            nformer_forward(np.ones((4, 3)), identity_weights(3, 3), cfg)

    def test_dimension_mismatch(self):
        cfg = NFormerConfig(d=5, layers=1)
        with pytest.raises(ShapeError):
            nformer_forward(np.ones((4, 3)), identity_weights(5, 1), cfg)

    def test_runtime_parameter_bounds(self):
        cfg = NFormerConfig(d=3, layers=1, n_landmarks=10, n_neighbors=2)
        with pytest.raises(ParameterError):
            nformer_forward(np.ones((4, 3)), identity_weights(3, 1), cfg)
        cfg = NFormerConfig(d=3, layers=1, n_landmarks=2, n_neighbors=10)
        with pytest.raises(ParameterError):
            nformer_forward(np.ones((4, 3)), identity_weights(3, 1), cfg)

    def test_config_validation(self):
        with pytest.raises(ParameterError):
            NFormerConfig(d=4, sign=2)
        with pytest.raises(ParameterError):
            NFormerConfig(d=4, layers=-1)
        with pytest.raises(ParameterError):
            NFormerConfig(d=4, landmark_policy="sometimes")
        with pytest.raises(ParameterError):
            NFormerConfig(d=4, affinity_mode="sparse")

    def test_query_query_isolation(self):
        # Two far-apart query rows plus one gallery row per query cluster:
        # queries must not pull information from each other.
        z = np.array([
            [1.0, 0.0], [0.99, 0.14],   # cluster A: query, gallery
            [0.0, 1.0], [0.14, 0.99],   # cluster B: query, gallery
        ])
        z = l2_normalize_rows(z)
        is_query = np.array([True, False, True, False])
        cfg = NFormerConfig(d=2, layers=1, n_neighbors=4, affinity_mode="dense")
        agg_masked = nformer_forward(z, identity_weights(2, 1), cfg, is_query=is_query) - z
        agg_free = nformer_forward(z, identity_weights(2, 1), cfg) - z
        assert not np.allclose(agg_masked[0], agg_free[0])
        # With the mask on, row 0 aggregates only cluster A members.
        assert agg_masked[0] @ z[0] > agg_masked[0] @ z[2]
