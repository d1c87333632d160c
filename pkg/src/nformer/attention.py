"""Pairwise affinity computation: dense inner products and the landmark
agent low-rank factorization.

The dense route scores every pair of projected features directly,
N*N*d multiply-accumulates.  The landmark route first describes every
feature by its similarities to a handful of sampled landmark rows,

    q_enc = q @ k_land^T        (N x l)
    k_enc = k @ q_land^T        (N x l)
    approx = q_enc @ k_enc^T    (N x N, optionally / sqrt(d))

so the N x N product costs N*N*l instead of N*N*d.  Only the two N x l
factors and the output are ever materialized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .counters import MacCounter
from .exceptions import ParameterError, ShapeError
from .validation import as_matrix

MODE_IDENTITY = "identity"
MODE_PROVIDED = "provided"
MODE_RANDOM = "random"


@dataclass(frozen=True)
class ProjectionSet:
    """Square query/key/value projection matrices of one shared dimension."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    mode: str = MODE_PROVIDED

    def __post_init__(self):
        if self.mode not in (MODE_IDENTITY, MODE_PROVIDED, MODE_RANDOM):
            raise ParameterError(f"unknown projection mode {self.mode!r}")
        for name, w in (("w_q", self.w_q), ("w_k", self.w_k), ("w_v", self.w_v)):
            w = as_matrix(w, name)
            if w.shape[0] != w.shape[1]:
                raise ShapeError(f"{name} must be square, got {w.shape}")
            object.__setattr__(self, name, w)
        if not (self.w_q.shape == self.w_k.shape == self.w_v.shape):
            raise ShapeError("w_q, w_k, w_v must share one dimension")
        if self.mode == MODE_IDENTITY:
            eye = np.eye(self.d)
            for name, w in (("w_q", self.w_q), ("w_k", self.w_k), ("w_v", self.w_v)):
                if not np.array_equal(w, eye):
                    raise ParameterError(f"identity mode requires {name} to be the identity")

    @property
    def d(self) -> int:
        return self.w_q.shape[0]

    @classmethod
    def identity(cls, d: int) -> "ProjectionSet":
        eye = np.eye(d)
        return cls(w_q=eye, w_k=eye.copy(), w_v=eye.copy(), mode=MODE_IDENTITY)

    @classmethod
    def random(cls, d: int, seed: int) -> "ProjectionSet":
        """Seeded Gaussian projections with entries ~ N(0, 1/d).

        The 1/d variance keeps projected row norms comparable to the input.
        """
        rng = np.random.default_rng(seed)
        std = 1.0 / math.sqrt(d)
        mats = [rng.normal(0.0, std, size=(d, d)) for _ in range(3)]
        return cls(w_q=mats[0], w_k=mats[1], w_v=mats[2], mode=MODE_RANDOM)


@dataclass(frozen=True)
class LandmarkSet:
    """Distinct row indices acting as landmark agents, plus the seed used."""

    indices: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size < 1:
            raise ParameterError("landmark indices must be a non-empty 1-D sequence")
        if np.unique(idx).size != idx.size:
            raise ParameterError("landmark indices must be distinct")
        if np.any(idx < 0):
            raise ParameterError("landmark indices must be non-negative")
        object.__setattr__(self, "indices", np.sort(idx))

    def __len__(self) -> int:
        return int(self.indices.size)


@dataclass
class AffinityMatrix:
    """N x N pairwise similarity scores.

    ``kind`` records the construction route ("dense" or "laa");
    ``n_landmarks`` is set for the landmark route; ``scaled`` records
    whether the 1/sqrt(d) factor was applied.
    """

    values: np.ndarray
    kind: str
    scaled: bool
    n_landmarks: int | None = None

    @property
    def n(self) -> int:
        return self.values.shape[0]


def project_qkv(z, projections: ProjectionSet):
    """Apply the three linear projections to the feature rows.

    Returns (q, k, v), each with the shape of ``z``.
    """
    z = as_matrix(z, "z")
    if z.shape[1] != projections.d:
        raise ShapeError(
            f"feature dimension {z.shape[1]} does not match projection dimension {projections.d}"
        )
    if projections.mode == MODE_IDENTITY:
        return z.copy(), z.copy(), z.copy()
    return z @ projections.w_q, z @ projections.w_k, z @ projections.w_v


def sample_landmarks(n: int, l: int, seed: int) -> LandmarkSet:
    """Uniformly sample ``l`` distinct row indices out of ``n``.

    Deterministic for a fixed (n, l, seed) triple; indices come back
    sorted (the affinity factorization is order-invariant).
    """
    n = int(n)
    l = int(l)
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if not 1 <= l <= n:
        raise ParameterError(f"landmark count must be in [1, {n}], got {l}")
    rng = np.random.default_rng(seed)
    indices = rng.choice(n, size=l, replace=False)
    return LandmarkSet(indices=indices, seed=seed)


def affinity_dense(q, k, scale: bool = True, counter: MacCounter | None = None) -> AffinityMatrix:
    """Dense affinity: entry (i, j) is the inner product q_i . k_j.

    Divided by sqrt(d) when ``scale`` is set.  Costs N*N*d MACs.
    """
    q = as_matrix(q, "q")
    k = as_matrix(k, "k")
    if q.shape != k.shape:
        raise ShapeError(f"q and k must both be N x d, got {q.shape} and {k.shape}")
    n, d = q.shape
    values = q @ k.T
    if scale:
        values = values / math.sqrt(d)
    if counter is not None:
        counter.add("dense_affinity", n * n * d)
    return AffinityMatrix(values=values, kind="dense", scaled=scale)


def affinity_laa(
    q,
    k,
    landmarks: LandmarkSet,
    scale: bool = True,
    counter: MacCounter | None = None,
    scale_denominator: str = "dim",
) -> AffinityMatrix:
    """Landmark agent affinity: low-rank approximation of the dense scores.

    Both factors are N x l similarity profiles against the landmark rows;
    their product approximates the dense affinity at N*l*d + N*l*d + N*N*l
    MACs.  ``scale_denominator`` selects the scaling constant: "dim"
    divides by sqrt(d) (the default), "landmarks" divides by sqrt(l)
    (an experimental alternative matching the factored dimension).
    """
    q = as_matrix(q, "q")
    k = as_matrix(k, "k")
    if q.shape != k.shape:
        raise ShapeError(f"q and k must both be N x d, got {q.shape} and {k.shape}")
    if scale_denominator not in ("dim", "landmarks"):
        raise ParameterError(f"scale_denominator must be 'dim' or 'landmarks', got {scale_denominator!r}")
    n, d = q.shape
    idx = landmarks.indices
    if idx.max() >= n:
        raise ShapeError(f"landmark index {int(idx.max())} out of range for {n} rows")
    l = idx.size

    q_enc = q @ k[idx].T
    k_enc = k @ q[idx].T
    values = q_enc @ k_enc.T
    if scale:
        denom = math.sqrt(d) if scale_denominator == "dim" else math.sqrt(l)
        values = values / denom
    if counter is not None:
        counter.add("laa_affinity", n * l * d + n * l * d + n * n * l)
    return AffinityMatrix(values=values, kind="laa", scaled=scale, n_landmarks=int(l))
