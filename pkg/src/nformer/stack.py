"""Stacked neighbor-attention layers, forward-only.

One layer runs: project q/k/v, build the (landmark-factored) affinity,
mask to reciprocal top-k neighbors, softmax over the support, aggregate
values, then a two-linear feed-forward with rectification in between.
Residual additions wrap both the attention and feed-forward sub-blocks
when enabled.  There is no normalization layer and no training path;
weights are supplied, generated from a seed, or loaded from file.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import (
    LandmarkSet,
    ProjectionSet,
    affinity_dense,
    affinity_laa,
    project_qkv,
    sample_landmarks,
)
from .counters import MacCounter
from .exceptions import ConfigError, ParameterError, ShapeError
from .neighbors import (
    aggregate_sparse,
    mask_query_query,
    reciprocal_mask,
    rns_weights,
    topk_mask,
)
from .validation import as_matrix, as_vector

LANDMARK_SHARED = "shared"
LANDMARK_PER_LAYER = "per_layer"
AFFINITY_LAA = "laa"
AFFINITY_DENSE = "dense"


@dataclass
class NFormerConfig:
    """Hyperparameters of the forward pass.

    Defaults follow the reference operating point: 4 stacked layers,
    5 landmark agents, 20 reciprocal neighbors, scaled affinities.
    """

    d: int
    layers: int = 4
    n_landmarks: int = 5
    n_neighbors: int = 20
    scale: bool = True
    sign: int = 1
    residual: bool = True
    landmark_policy: str = LANDMARK_SHARED
    seed: int = 0
    affinity_mode: str = AFFINITY_LAA
    include_self: bool = True

    def __post_init__(self):
        if self.d < 1:
            raise ParameterError(f"d must be >= 1, got {self.d}")
        if self.layers < 0:
            raise ParameterError(f"layers must be >= 0, got {self.layers}")
        if self.sign not in (1, -1):
            raise ParameterError(f"sign must be +1 or -1, got {self.sign}")
        if self.landmark_policy not in (LANDMARK_SHARED, LANDMARK_PER_LAYER):
            raise ParameterError(f"unknown landmark_policy {self.landmark_policy!r}")
        if self.affinity_mode not in (AFFINITY_LAA, AFFINITY_DENSE):
            raise ParameterError(f"unknown affinity_mode {self.affinity_mode!r}")
        if self.n_landmarks < 1:
            raise ParameterError(f"n_landmarks must be >= 1, got {self.n_landmarks}")
        if self.n_neighbors < 1:
            raise ParameterError(f"n_neighbors must be >= 1, got {self.n_neighbors}")


@dataclass
class LayerWeights:
    """Weights of one layer: q/k/v projections plus the feed-forward pair."""

    projections: ProjectionSet
    ff1: np.ndarray
    b1: np.ndarray
    ff2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        d = self.projections.d
        self.ff1 = as_matrix(self.ff1, "ff1")
        self.ff2 = as_matrix(self.ff2, "ff2")
        self.b1 = as_vector(self.b1, "b1")
        self.b2 = as_vector(self.b2, "b2")
        for name, arr, shape in (
            ("ff1", self.ff1, (d, d)),
            ("ff2", self.ff2, (d, d)),
            ("b1", self.b1, (d,)),
            ("b2", self.b2, (d,)),
        ):
            if arr.shape != shape:
                raise ShapeError(f"{name} must have shape {shape}, got {arr.shape}")

    @property
    def d(self) -> int:
        return self.projections.d

    @classmethod
    def identity(cls, d: int) -> "LayerWeights":
        """Identity projections and a zeroed feed-forward (ff2 = 0, so the
        FF sub-block contributes nothing)."""
        return cls(
            projections=ProjectionSet.identity(d),
            ff1=np.eye(d),
            b1=np.zeros(d),
            ff2=np.zeros((d, d)),
            b2=np.zeros(d),
        )

    @classmethod
    def random(cls, d: int, seed: int) -> "LayerWeights":
        rng = np.random.default_rng(seed)
        std = 1.0 / np.sqrt(d)
        return cls(
            projections=ProjectionSet.random(d, seed=int(rng.integers(2**31))),
            ff1=rng.normal(0.0, std, size=(d, d)),
            b1=np.zeros(d),
            ff2=rng.normal(0.0, std, size=(d, d)),
            b2=np.zeros(d),
        )


def _run_time_checks(n: int, cfg: NFormerConfig) -> None:
    if cfg.affinity_mode == AFFINITY_LAA and not 1 <= cfg.n_landmarks <= n:
        raise ParameterError(f"n_landmarks must be in [1, {n}] for {n} rows, got {cfg.n_landmarks}")
    if not 1 <= cfg.n_neighbors <= n:
        raise ParameterError(f"n_neighbors must be in [1, {n}] for {n} rows, got {cfg.n_neighbors}")


def nformer_layer(
    z,
    weights: LayerWeights,
    cfg: NFormerConfig,
    landmarks: LandmarkSet | None = None,
    is_query: np.ndarray | None = None,
    counter: MacCounter | None = None,
) -> np.ndarray:
    """One attention + feed-forward layer; output has the shape of ``z``."""
    z = as_matrix(z, "z")
    if z.shape[1] != cfg.d:
        raise ShapeError(f"input dimension {z.shape[1]} does not match config d={cfg.d}")
    if weights.d != cfg.d:
        raise ConfigError(f"layer weights have d={weights.d}, config has d={cfg.d}")
    n = z.shape[0]
    _run_time_checks(n, cfg)

    q, k, v = project_qkv(z, weights.projections)
    if cfg.affinity_mode == AFFINITY_LAA:
        if landmarks is None:
            landmarks = sample_landmarks(n, cfg.n_landmarks, cfg.seed)
        affinity = affinity_laa(q, k, landmarks, scale=cfg.scale, counter=counter)
    else:
        affinity = affinity_dense(q, k, scale=cfg.scale, counter=counter)

    mask = reciprocal_mask(topk_mask(affinity, cfg.n_neighbors, include_self=cfg.include_self))
    if is_query is not None:
        mask = mask_query_query(mask, is_query)
    att = rns_weights(affinity, mask, sign=cfg.sign)
    u = aggregate_sparse(att, v, counter=counter)

    h = z + u if cfg.residual else u
    ff = np.maximum(h @ weights.ff1 + weights.b1, 0.0) @ weights.ff2 + weights.b2
    return h + ff if cfg.residual else ff


def _landmark_schedule(n: int, cfg: NFormerConfig) -> list[LandmarkSet | None]:
    if cfg.affinity_mode == AFFINITY_DENSE:
        return [None] * cfg.layers
    if cfg.landmark_policy == LANDMARK_SHARED:
        shared = sample_landmarks(n, cfg.n_landmarks, cfg.seed)
        return [shared] * cfg.layers
    child_seeds = np.random.SeedSequence(cfg.seed).generate_state(cfg.layers)
    return [sample_landmarks(n, cfg.n_landmarks, int(s)) for s in child_seeds]


def nformer_forward(
    z,
    weights: list[LayerWeights],
    cfg: NFormerConfig,
    is_query: np.ndarray | None = None,
    landmarks: LandmarkSet | list[LandmarkSet] | None = None,
    counter: MacCounter | None = None,
) -> np.ndarray:
    """Apply ``cfg.layers`` layers sequentially.

    Landmarks are sampled once per forward pass and shared across layers
    by default (``landmark_policy="shared"``); ``"per_layer"`` resamples
    per layer from seeds derived from ``cfg.seed``.  An explicit
    ``landmarks`` argument overrides sampling.
    """
    z = as_matrix(z, "z")
    if z.shape[1] != cfg.d:
        raise ShapeError(f"input dimension {z.shape[1]} does not match config d={cfg.d}")
    if len(weights) != cfg.layers:
        raise ConfigError(f"got {len(weights)} layer weights for {cfg.layers} configured layers")
    if cfg.layers == 0:
        return z.copy()
    n = z.shape[0]
    _run_time_checks(n, cfg)

    if landmarks is None:
        schedule = _landmark_schedule(n, cfg)
    elif isinstance(landmarks, LandmarkSet):
        schedule = [landmarks] * cfg.layers
    else:
        if len(landmarks) != cfg.layers:
            raise ConfigError(f"got {len(landmarks)} landmark sets for {cfg.layers} layers")
        schedule = list(landmarks)

    out = z
    for layer_weights, layer_landmarks in zip(weights, schedule):
        out = nformer_layer(out, layer_weights, cfg, landmarks=layer_landmarks,
                            is_query=is_query, counter=counter)
    return out


def identity_weights(d: int, layers: int) -> list[LayerWeights]:
    """Identity projections with disabled feed-forward for every layer."""
    return [LayerWeights.identity(d) for _ in range(layers)]


def random_weights(d: int, layers: int, seed: int) -> list[LayerWeights]:
    """Seeded random weights, one independent draw per layer."""
    child_seeds = np.random.SeedSequence(seed).generate_state(max(layers, 1))
    return [LayerWeights.random(d, int(child_seeds[i])) for i in range(layers)]
