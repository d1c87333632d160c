"""Analytic cost model for the attention kernels.

Counts are multiply-accumulates (1 MAC = 2 FLOPs).  Per layer:

  dense affinity     N*N*d
  landmark affinity  N*l*d + N*l*d + N*N*l   (two factors plus product)
  dense aggregation  N*N*d
  sparse aggregation N*k*d                    (upper bound; instrumented
                                               runs report actual support)

The headline ratios compare the attention path (affinity + aggregation)
of a dense-softmax layer against the landmark/reciprocal layer; the
projection and feed-forward costs are identical on both sides and are
reported separately.
"""

from __future__ import annotations

from dataclasses import dataclass

from .exceptions import ParameterError


@dataclass
class FlopReport:
    n: int
    d: int
    l: int
    k: int
    layers: int

    # Per-layer kernel MACs.
    dense_affinity_macs: int
    laa_affinity_macs: int
    dense_agg_macs: int
    sparse_agg_macs: int
    projection_macs: int
    feedforward_macs: int

    # Attention-path totals over all layers.
    dense_attention_total_macs: int
    nformer_attention_total_macs: int

    # Derived ratios.
    affinity_product_ratio: float   # N^2 l over N^2 d product stages: l/d
    affinity_total_ratio: float     # full landmark affinity over dense affinity
    aggregation_ratio: float        # k/N
    dense_over_nformer: float       # attention-path cost ratio

    # Per-person figures (totals / N), in MACs and GFLOPs.
    per_person_dense_macs: float
    per_person_nformer_macs: float
    per_person_dense_gflops: float
    per_person_nformer_gflops: float

    def to_dict(self) -> dict:
        return {
            "params": {"n": self.n, "d": self.d, "l": self.l, "k": self.k, "layers": self.layers},
            "per_layer_macs": {
                "dense_affinity": self.dense_affinity_macs,
                "laa_affinity": self.laa_affinity_macs,
                "dense_aggregate": self.dense_agg_macs,
                "sparse_aggregate": self.sparse_agg_macs,
                "projections": self.projection_macs,
                "feedforward": self.feedforward_macs,
            },
            "totals_macs": {
                "dense_attention": self.dense_attention_total_macs,
                "nformer_attention": self.nformer_attention_total_macs,
            },
            "ratios": {
                "affinity_product": self.affinity_product_ratio,
                "affinity_total": self.affinity_total_ratio,
                "aggregation": self.aggregation_ratio,
                "dense_over_nformer": self.dense_over_nformer,
            },
            "per_person": {
                "dense_macs": self.per_person_dense_macs,
                "nformer_macs": self.per_person_nformer_macs,
                "dense_gflops": self.per_person_dense_gflops,
                "nformer_gflops": self.per_person_nformer_gflops,
            },
        }


def flop_model(n: int, d: int, l: int, k: int, layers: int = 4) -> FlopReport:
    """Analytic MAC counts and ratios for the given operating point."""
    for name, value in (("n", n), ("d", d), ("l", l), ("k", k), ("layers", layers)):
        if value < 1:
            raise ParameterError(f"{name} must be >= 1, got {value}")

    dense_affinity = n * n * d
    laa_affinity = 2 * n * l * d + n * n * l
    dense_agg = n * n * d
    sparse_agg = n * k * d
    projections = 3 * n * d * d
    feedforward = 2 * n * d * d

    dense_total = layers * (dense_affinity + dense_agg)
    nformer_total = layers * (laa_affinity + sparse_agg)

    return FlopReport(
        n=n, d=d, l=l, k=k, layers=layers,
        dense_affinity_macs=dense_affinity,
        laa_affinity_macs=laa_affinity,
        dense_agg_macs=dense_agg,
        sparse_agg_macs=sparse_agg,
        projection_macs=projections,
        feedforward_macs=feedforward,
        dense_attention_total_macs=dense_total,
        nformer_attention_total_macs=nformer_total,
        affinity_product_ratio=l / d,
        affinity_total_ratio=laa_affinity / dense_affinity,
        aggregation_ratio=k / n,
        dense_over_nformer=dense_total / nformer_total,
        per_person_dense_macs=dense_total / n,
        per_person_nformer_macs=nformer_total / n,
        per_person_dense_gflops=2.0 * dense_total / n / 1e9,
        per_person_nformer_gflops=2.0 * nformer_total / n / 1e9,
    )
