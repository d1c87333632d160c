"""Sparse attention over reciprocal neighbors.

The pipeline is: keep each row's top-k affinities, intersect with the
transposed mask so only mutually-nearest pairs survive, run a softmax
restricted to that support, and aggregate value rows over the surviving
columns only.  Aggregation then costs at most N*k*d MACs instead of
N*N*d.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .attention import AffinityMatrix
from .counters import MacCounter
from .exceptions import ParameterError, ShapeError
from .validation import as_matrix

logger = logging.getLogger(__name__)


def _affinity_values(a, name: str = "a") -> np.ndarray:
    values = a.values if isinstance(a, AffinityMatrix) else as_matrix(a, name)
    if values.shape[0] != values.shape[1]:
        raise ShapeError(f"{name} must be a square affinity matrix, got {values.shape}")
    return values


@dataclass
class NeighborMask:
    """Boolean N x N mask stored as per-row sorted index lists."""

    n: int
    k: int
    rows: list[np.ndarray]

    def dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n), dtype=bool)
        for i, cols in enumerate(self.rows):
            out[i, cols] = True
        return out

    @classmethod
    def from_dense(cls, dense: np.ndarray, k: int) -> "NeighborMask":
        n = dense.shape[0]
        rows = [np.flatnonzero(dense[i]) for i in range(n)]
        return cls(n=n, k=k, rows=rows)


@dataclass
class SparseAttention:
    """Row-stochastic sparse weights: per-row (columns, weights) pairs.

    Columns are strictly increasing within each row and the weights of a
    row sum to 1.
    """

    n: int
    rows: list[tuple[np.ndarray, np.ndarray]]

    def dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        for i, (cols, weights) in enumerate(self.rows):
            out[i, cols] = weights
        return out


def topk_mask(a, k: int, include_self: bool = True) -> NeighborMask:
    """Per-row top-k mask of an affinity matrix; each row has exactly k
    true entries.

    With ``include_self`` (the default policy) the diagonal entry is
    forced into every row's set, counting toward k; this guarantees the
    reciprocal mask has non-empty rows, since the self pair is trivially
    mutual.  Ties resolve to the smallest column index.
    """
    values = _affinity_values(a)
    n = values.shape[0]
    if not 1 <= k <= n:
        raise ParameterError(f"k must be in [1, {n}], got {k}")
    # Stable argsort of the negated rows: ties keep ascending column order,
    # matching linalg.topk_indices.
    order = np.argsort(-values, axis=1, kind="stable")
    if include_self and n > 1:
        self_col = np.arange(n)[:, None]
        keep = order != self_col
        non_self = order[keep].reshape(n, n - 1)
        chosen = np.concatenate([self_col, non_self[:, : k - 1]], axis=1)
    elif include_self:
        chosen = np.zeros((1, 1), dtype=np.int64)
    else:
        chosen = order[:, :k]
    chosen = np.sort(chosen, axis=1)
    rows = [chosen[i] for i in range(n)]
    return NeighborMask(n=n, k=k, rows=rows)


def reciprocal_mask(mk: NeighborMask) -> NeighborMask:
    """Intersect a top-k mask with its transpose: keep (i, j) only when
    each is in the other's top-k set.  Symmetric by construction.
    """
    dense = mk.dense()
    mutual = dense & dense.T
    return NeighborMask.from_dense(mutual, k=mk.k)


def mask_query_query(mask: NeighborMask, is_query: np.ndarray) -> NeighborMask:
    """Drop mask entries between two distinct query rows.

    Self entries stay so every row keeps non-empty support.  Used at
    evaluation time, where distinct probe images must not exchange
    information.
    """
    is_query = np.asarray(is_query, dtype=bool)
    if is_query.shape != (mask.n,):
        raise ShapeError(f"is_query must have shape ({mask.n},), got {is_query.shape}")
    rows = []
    for i, cols in enumerate(mask.rows):
        if is_query[i]:
            keep = ~is_query[cols] | (cols == i)
            cols = cols[keep]
        rows.append(cols)
    return NeighborMask(n=mask.n, k=mask.k, rows=rows)


def rns_weights(a, mask: NeighborMask, sign: int = 1) -> SparseAttention:
    """Softmax of the affinities restricted to the mask support.

    Per row: weight_j = exp(sign * a_ij - rowmax) normalized over the
    row's supported columns; entries outside the support are zero.  The
    per-row max subtraction keeps the exponentials bounded for arbitrary
    affinity magnitudes.  ``sign=+1`` up-weights the most similar
    neighbors (standard attention); ``sign=-1`` runs the inverted
    variant.

    Rows with empty support (only reachable when the mask was built
    without the self-inclusion policy) fall back to weight 1 on self and
    are logged.
    """
    values = _affinity_values(a)
    if sign not in (1, -1):
        raise ParameterError(f"sign must be +1 or -1, got {sign}")
    n = values.shape[0]
    if mask.n != n:
        raise ShapeError(f"mask size {mask.n} does not match affinity size {n}")
    rows: list[tuple[np.ndarray, np.ndarray]] = []
    fallback_rows = []
    for i, cols in enumerate(mask.rows):
        if cols.size == 0:
            fallback_rows.append(i)
            rows.append((np.array([i], dtype=np.int64), np.array([1.0])))
            continue
        scores = sign * values[i, cols]
        shifted = scores - scores.max()
        expd = np.exp(shifted)
        rows.append((cols, expd / expd.sum()))
    if fallback_rows:
        logger.warning(
            "%d row(s) had no reciprocal neighbors; fell back to identity weights (rows %s)",
            len(fallback_rows),
            fallback_rows[:10],
        )
    return SparseAttention(n=n, rows=rows)


def aggregate_sparse(att: SparseAttention, v, counter: MacCounter | None = None) -> np.ndarray:
    """Weighted sum of value rows over each row's supported columns only.

    Touches len(support) * d MACs per row, so at most N*k*d in total.
    """
    v = as_matrix(v, "v")
    if att.n != v.shape[0]:
        raise ShapeError(f"attention over {att.n} rows cannot aggregate {v.shape[0]} value rows")
    d = v.shape[1]
    out = np.empty((att.n, d))
    macs = 0
    for i, (cols, weights) in enumerate(att.rows):
        out[i] = weights @ v[cols]
        macs += cols.size * d
    if counter is not None:
        counter.add("sparse_aggregate", macs)
    return out


def aggregate_dense(weights, v, counter: MacCounter | None = None) -> np.ndarray:
    """Plain dense product weights @ v; the N*N*d reference path for the
    sparse aggregation."""
    weights = as_matrix(weights, "weights")
    v = as_matrix(v, "v")
    if weights.shape[0] != weights.shape[1]:
        raise ShapeError(f"weights must be square, got {weights.shape}")
    if weights.shape[1] != v.shape[0]:
        raise ShapeError(f"cannot aggregate: weights {weights.shape} vs values {v.shape}")
    if counter is not None:
        counter.add("dense_aggregate", weights.shape[0] * weights.shape[1] * v.shape[1])
    return weights @ v
