"""Synthetic multi-camera identity data and retrieval scoring.

Datasets are clusters on the unit sphere: one random unit centroid per
identity, Gaussian spread around it, and a flagged fraction of samples
pushed further out to act as outliers.  Scoring follows the standard
retrieval protocol: rank the gallery per query by inner product, then
report the top-K accuracy curve (CMC) and mean average precision.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import ParameterError, ShapeError
from .linalg import l2_normalize_rows
from .stack import NFormerConfig, LayerWeights, nformer_forward
from .validation import as_matrix

logger = logging.getLogger(__name__)

ROLE_QUERY = "query"
ROLE_GALLERY = "gallery"


@dataclass(frozen=True)
class GenParams:
    """Generation knobs for one synthetic dataset."""

    identities: int
    images_per_identity: int
    dim: int
    cluster_spread: float = 0.35
    outlier_fraction: float = 0.15
    outlier_scale: float = 3.0
    seed: int = 0
    queries_per_identity: int | None = None

    def resolved_queries_per_identity(self) -> int:
        if self.queries_per_identity is not None:
            return self.queries_per_identity
        # Roughly 1 query per 4 images, always leaving gallery samples.
        return min(self.images_per_identity - 1, max(1, self.images_per_identity // 4))


@dataclass
class SyntheticDataset:
    features: np.ndarray       # N x d, unit rows
    labels: np.ndarray         # N identity ids
    roles: np.ndarray          # N strings, "query" or "gallery"
    outlier_flags: np.ndarray  # N booleans
    gen_params: GenParams

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def is_query(self) -> np.ndarray:
        return self.roles == ROLE_QUERY


@dataclass
class RetrievalResult:
    """CMC curve, mAP and the per-query average precisions behind it."""

    cmc: np.ndarray
    map: float
    per_query_ap: np.ndarray
    excluded_queries: list[int]

    def to_dict(self) -> dict:
        return {
            "cmc": self.cmc.tolist(),
            "map": self.map,
            "n_queries_scored": int(self.per_query_ap.size),
            "n_queries_excluded": len(self.excluded_queries),
        }


def synth_generate(params: GenParams) -> SyntheticDataset:
    """Generate a clustered unit-sphere dataset, deterministic per seed."""
    p, q, d = params.identities, params.images_per_identity, params.dim
    if p < 2:
        raise ParameterError(f"identities must be >= 2, got {p}")
    if q < 2:
        raise ParameterError(f"images_per_identity must be >= 2, got {q}")
    if not 0.0 <= params.outlier_fraction < 1.0:
        raise ParameterError(f"outlier_fraction must be in [0, 1), got {params.outlier_fraction}")
    if params.cluster_spread < 0.0 or params.outlier_scale < 0.0:
        raise ParameterError("cluster_spread and outlier_scale must be non-negative")
    qpi = params.resolved_queries_per_identity()
    if not 1 <= qpi <= q - 1:
        raise ParameterError(f"queries_per_identity must be in [1, {q - 1}], got {qpi}")

    rng = np.random.default_rng(params.seed)
    n = p * q
    centroids = l2_normalize_rows(rng.normal(size=(p, d)))
    # Per-coordinate std sigma/sqrt(d): the expected noise norm equals
    # cluster_spread regardless of dimension, so the spread is always
    # relative to the unit centroid.
    coord_std = params.cluster_spread / np.sqrt(d)
    samples = np.repeat(centroids, q, axis=0) + coord_std * rng.normal(size=(n, d))

    n_outliers = int(round(params.outlier_fraction * n))
    outlier_flags = np.zeros(n, dtype=bool)
    if n_outliers:
        chosen = rng.choice(n, size=n_outliers, replace=False)
        outlier_flags[chosen] = True
        samples[chosen] += params.outlier_scale * coord_std * rng.normal(
            size=(n_outliers, d)
        )

    features = l2_normalize_rows(samples)
    labels = np.repeat(np.arange(p), q)
    roles = np.full(n, ROLE_GALLERY, dtype="<U7")
    for identity in range(p):
        start = identity * q
        roles[start:start + qpi] = ROLE_QUERY
    return SyntheticDataset(
        features=features,
        labels=labels,
        roles=roles,
        outlier_flags=outlier_flags,
        gen_params=params,
    )


def rank_gallery(queries, gallery) -> np.ndarray:
    """Per-query gallery indices in order of decreasing inner product.

    Ties resolve to the smallest gallery index.  For unit rows this is
    cosine ranking.
    """
    queries = as_matrix(queries, "queries")
    gallery = as_matrix(gallery, "gallery")
    if queries.shape[1] != gallery.shape[1]:
        raise ShapeError(
            f"dimension mismatch: queries {queries.shape} vs gallery {gallery.shape}"
        )
    sims = queries @ gallery.T
    return np.argsort(-sims, axis=1, kind="stable")


def cmc(rankings, query_labels, gallery_labels, k_max: int) -> np.ndarray:
    """Top-K accuracy curve: cmc[K-1] is the fraction of queries with at
    least one correct identity among their top K ranked gallery items."""
    rankings = np.asarray(rankings)
    query_labels = np.asarray(query_labels)
    gallery_labels = np.asarray(gallery_labels)
    n_gallery = rankings.shape[1]
    k_max = int(min(k_max, n_gallery))
    if k_max < 1:
        raise ParameterError("k_max must be >= 1")
    correct = gallery_labels[rankings] == query_labels[:, None]
    hits = np.cumsum(correct[:, :k_max], axis=1) >= 1
    return hits.mean(axis=0)


def mean_ap(rankings, query_labels, gallery_labels, k_max: int | None = None) -> RetrievalResult:
    """Average precision per query plus the CMC curve.

    AP is the mean of precision-at-position over the positions holding
    relevant items.  Queries with no relevant gallery item are excluded
    from the mean and reported in ``excluded_queries``.
    """
    rankings = np.asarray(rankings)
    query_labels = np.asarray(query_labels)
    gallery_labels = np.asarray(gallery_labels)
    n_gallery = rankings.shape[1]
    correct = (gallery_labels[rankings] == query_labels[:, None]).astype(np.float64)

    aps = []
    excluded = []
    positions = np.arange(1, n_gallery + 1, dtype=np.float64)
    for i in range(rankings.shape[0]):
        rel = correct[i]
        n_rel = rel.sum()
        if n_rel == 0:
            excluded.append(i)
            continue
        precision_at = np.cumsum(rel) / positions
        aps.append(float((precision_at * rel).sum() / n_rel))
    if excluded:
        logger.warning("%d query(ies) had no relevant gallery items and were excluded", len(excluded))
    if not aps:
        raise ParameterError("no query has a relevant gallery item; mAP undefined")
    per_query_ap = np.asarray(aps)
    curve = cmc(rankings, query_labels, gallery_labels, k_max or n_gallery)
    return RetrievalResult(
        cmc=curve,
        map=float(per_query_ap.mean()),
        per_query_ap=per_query_ap,
        excluded_queries=excluded,
    )


def eval_pipeline(
    ds: SyntheticDataset,
    cfg: NFormerConfig,
    weights: list[LayerWeights],
    k_max: int | None = None,
) -> tuple[RetrievalResult, RetrievalResult]:
    """Score retrieval before and after the neighbor-attention forward.

    The forward pass sees all rows at once with query-query interactions
    masked out; transformed features are re-normalized so both rankings
    are cosine rankings.
    """
    is_query = ds.is_query
    if not is_query.any() or is_query.all():
        raise ParameterError("dataset must contain both query and gallery rows")
    q_labels = ds.labels[is_query]
    g_labels = ds.labels[~is_query]

    before_rank = rank_gallery(ds.features[is_query], ds.features[~is_query])
    before = mean_ap(before_rank, q_labels, g_labels, k_max)

    transformed = nformer_forward(ds.features, weights, cfg, is_query=is_query)
    transformed = l2_normalize_rows(transformed)
    after_rank = rank_gallery(transformed[is_query], transformed[~is_query])
    after = mean_ap(after_rank, q_labels, g_labels, k_max)
    return before, after
