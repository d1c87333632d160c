import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import Pipeline

from nformer import NFormer
from nformer.exceptions import ConfigError, ShapeError
from nformer.stack import LayerWeights, NFormerConfig, identity_weights, nformer_forward


@pytest.fixture
def features():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(40, 6))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


class TestEstimatorContract:
    def test_get_set_params_roundtrip(self):
        est = NFormer(n_layers=2, n_landmarks=3, n_neighbors=7, seed=5)
        params = est.get_params()
        assert params["n_layers"] == 2 and params["n_neighbors"] == 7
        est.set_params(n_neighbors=9)
        assert est.n_neighbors == 9

    def test_clone(self):
        est = NFormer(n_layers=1, softmax_sign=-1)
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()

    def test_fit_returns_self_and_sets_state(self, features):
        est = NFormer(n_layers=2, n_landmarks=4, n_neighbors=5)
        assert est.fit(features) is est
        assert est.n_features_in_ == 6
        assert len(est.weights_) == 2

    def test_transform_before_fit_raises(self, features):
        with pytest.raises(NotFittedError):
            NFormer().transform(features)

    def test_transform_matches_functional_forward(self, features):
        est = NFormer(n_layers=2, n_landmarks=3, n_neighbors=5, seed=11).fit(features)
        got = est.transform(features)
        cfg = NFormerConfig(d=6, layers=2, n_landmarks=3, n_neighbors=5, seed=11)
        want = nformer_forward(features, identity_weights(6, 2), cfg)
        np.testing.assert_array_equal(got, want)

    def test_fit_transform_shape(self, features):
        out = NFormer(n_layers=1, n_landmarks=2, n_neighbors=4).fit_transform(features)
        assert out.shape == features.shape

    def test_feature_count_mismatch(self, features):
        est = NFormer(n_layers=1, n_landmarks=2, n_neighbors=4).fit(features)
        with pytest.raises(ShapeError):
            est.transform(features[:, :4])

    def test_random_weights_deterministic(self, features):
        a = NFormer(n_layers=2, n_landmarks=2, n_neighbors=4, weights="random", seed=3)
        b = NFormer(n_layers=2, n_landmarks=2, n_neighbors=4, weights="random", seed=3)
        np.testing.assert_array_equal(
            a.fit_transform(features), b.fit_transform(features)
        )

    def test_explicit_weight_list(self, features):
        weights = identity_weights(6, 2)
        est = NFormer(n_layers=2, n_landmarks=2, n_neighbors=4, weights=weights)
        est.fit(features)
        assert est.weights_ == weights

    def test_weight_dimension_mismatch(self, features):
        est = NFormer(n_layers=1, weights=identity_weights(4, 1))
        with pytest.raises(ConfigError):
            est.fit(features)

    def test_pipeline_composition(self, features):
        pipe = Pipeline([("agg", NFormer(n_layers=1, n_landmarks=3, n_neighbors=5))])
        out = pipe.fit_transform(features)
        assert out.shape == features.shape

    def test_weight_file_param(self, features, tmp_path):
        from nformer.io import write_weights

        path = tmp_path / "w.nfwt"
        write_weights(path, [LayerWeights.identity(6)])
        est = NFormer(n_layers=1, n_landmarks=3, n_neighbors=5, weights=str(path))
        out = est.fit_transform(features)
        assert out.shape == features.shape
