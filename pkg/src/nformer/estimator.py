"""Scikit-learn estimator wrapper around the forward pass.

``NFormer`` is a stateless-in-spirit transformer: ``fit`` validates the
feature dimension and materializes layer weights, ``transform`` refines
an N x d feature matrix by aggregating each row with its reciprocal
neighbors.  It composes with sklearn pipelines and honors the
get_params/set_params contract.
"""

from __future__ import annotations

from pathlib import Path

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .exceptions import ConfigError, ShapeError
from .stack import (
    LayerWeights,
    NFormerConfig,
    identity_weights,
    nformer_forward,
    random_weights,
)
from .validation import as_matrix


class NFormer(TransformerMixin, BaseEstimator):
    """Neighbor-attention feature aggregator.

    Parameters
    ----------
    n_layers : int, default=4
        Number of stacked attention layers.
    n_landmarks : int, default=5
        Landmark agents used to factor the affinity computation.
    n_neighbors : int, default=20
        Top-k budget per row before the reciprocity intersection.
    scale : bool, default=True
        Divide affinities by sqrt(d).
    softmax_sign : int, default=1
        +1 up-weights similar neighbors; -1 runs the inverted softmax.
    residual : bool, default=True
        Residual additions around the attention and feed-forward blocks.
    landmark_policy : {"shared", "per_layer"}, default="shared"
        Whether all layers reuse one landmark sample per forward pass.
    affinity : {"laa", "dense"}, default="laa"
        Landmark-factored or exact dense affinity.
    weights : {"identity", "random"} or list of LayerWeights or path
        Weight source.  "identity" uses identity projections with a
        disabled feed-forward; "random" draws seeded Gaussian weights;
        a list is used as-is; a string/Path is loaded as a weight file.
    seed : int, default=0
        Drives landmark sampling and random weight generation.
    """

    def __init__(self, n_layers=4, n_landmarks=5, n_neighbors=20, scale=True,
                 softmax_sign=1, residual=True, landmark_policy="shared",
                 affinity="laa", weights="identity", seed=0):
        self.n_layers = n_layers
        self.n_landmarks = n_landmarks
        self.n_neighbors = n_neighbors
        self.scale = scale
        self.softmax_sign = softmax_sign
        self.residual = residual
        self.landmark_policy = landmark_policy
        self.affinity = affinity
        self.weights = weights
        self.seed = seed

    def _resolve_weights(self, d: int) -> list[LayerWeights]:
        if isinstance(self.weights, str) and self.weights == "identity":
            return identity_weights(d, self.n_layers)
        if isinstance(self.weights, str) and self.weights == "random":
            return random_weights(d, self.n_layers, self.seed)
        if isinstance(self.weights, (str, Path)):
            from .io import read_weights

            loaded = read_weights(self.weights)
            if loaded and loaded[0].d != d:
                raise ConfigError(
                    f"weight file dimension {loaded[0].d} does not match data dimension {d}"
                )
            return loaded
        weights = list(self.weights)
        for w in weights:
            if w.d != d:
                raise ConfigError(f"layer weights have d={w.d}, data has d={d}")
        return weights

    def fit(self, X, y=None):
        """Validate the feature matrix and materialize layer weights."""
        X = as_matrix(X, "X")
        self.n_features_in_ = X.shape[1]
        self.config_ = NFormerConfig(
            d=self.n_features_in_,
            layers=self.n_layers,
            n_landmarks=self.n_landmarks,
            n_neighbors=self.n_neighbors,
            scale=self.scale,
            sign=self.softmax_sign,
            residual=self.residual,
            landmark_policy=self.landmark_policy,
            seed=self.seed,
            affinity_mode=self.affinity,
        )
        weights = self._resolve_weights(self.n_features_in_)
        if len(weights) != self.n_layers:
            raise ConfigError(f"got {len(weights)} layer weights for n_layers={self.n_layers}")
        self.weights_ = weights
        return self

    def transform(self, X):
        """Aggregate each row with its reciprocal neighbors; returns N x d."""
        if not hasattr(self, "weights_"):
            raise NotFittedError("NFormer instance is not fitted yet; call fit first")
        X = as_matrix(X, "X")
        if X.shape[1] != self.n_features_in_:
            raise ShapeError(
                f"X has {X.shape[1]} features, but NFormer was fitted with {self.n_features_in_}"
            )
        return nformer_forward(X, self.weights_, self.config_)
