"""Neighbor-attention feature aggregation.

Refines a set of feature vectors by letting each one attend to its
reciprocal nearest neighbors: affinities come from a landmark low-rank
factorization, attention is a softmax restricted to mutually-nearest
pairs, and stacked layers aggregate value vectors sparsely.  Ships with
a spectral verification suite for the selection-projection analysis
behind the approximation, a synthetic retrieval evaluator (CMC / mAP)
and an analytic plus measured cost harness.
"""

__version__ = "0.1.0"

from .attention import (
    AffinityMatrix,
    LandmarkSet,
    ProjectionSet,
    affinity_dense,
    affinity_laa,
    project_qkv,
    sample_landmarks,
)
from .counters import MacCounter
from .estimator import NFormer
from .exceptions import (
    ConfigError,
    ConvergenceError,
    DataFormatError,
    DegenerateInputError,
    NFormerError,
    NonFiniteInputError,
    ParameterError,
    ShapeError,
    UndefinedCosineError,
)
from .flops import FlopReport, flop_model
from .linalg import EigenDecomposition, eigh_symmetric, l2_normalize_rows, matmul, topk_indices
from .neighbors import (
    NeighborMask,
    SparseAttention,
    aggregate_dense,
    aggregate_sparse,
    mask_query_query,
    reciprocal_mask,
    rns_weights,
    topk_mask,
)
from .retrieval import (
    GenParams,
    RetrievalResult,
    SyntheticDataset,
    cmc,
    eval_pipeline,
    mean_ap,
    rank_gallery,
    synth_generate,
)
from .spectral import (
    BoundReport,
    MonotonicityReport,
    SelectionDiag,
    SpectralReport,
    bound_check,
    build_attention,
    cosine_direct,
    cosine_spectral,
    cosine_trace,
    exhaustive_selection_scan,
    nested_monotonicity_check,
    select_and_project,
)
from .stack import (
    LayerWeights,
    NFormerConfig,
    identity_weights,
    nformer_forward,
    nformer_layer,
    random_weights,
)

__all__ = [
    "AffinityMatrix",
    "BoundReport",
    "ConfigError",
    "ConvergenceError",
    "DataFormatError",
    "DegenerateInputError",
    "EigenDecomposition",
    "FlopReport",
    "GenParams",
    "LandmarkSet",
    "LayerWeights",
    "MacCounter",
    "MonotonicityReport",
    "NFormer",
    "NFormerConfig",
    "NFormerError",
    "NeighborMask",
    "NonFiniteInputError",
    "ParameterError",
    "ProjectionSet",
    "RetrievalResult",
    "SelectionDiag",
    "ShapeError",
    "SparseAttention",
    "SpectralReport",
    "SyntheticDataset",
    "UndefinedCosineError",
    "affinity_dense",
    "affinity_laa",
    "aggregate_dense",
    "aggregate_sparse",
    "bound_check",
    "build_attention",
    "cmc",
    "cosine_direct",
    "cosine_spectral",
    "cosine_trace",
    "eigh_symmetric",
    "eval_pipeline",
    "exhaustive_selection_scan",
    "flop_model",
    "identity_weights",
    "l2_normalize_rows",
    "mask_query_query",
    "matmul",
    "mean_ap",
    "nested_monotonicity_check",
    "nformer_forward",
    "nformer_layer",
    "project_qkv",
    "random_weights",
    "rank_gallery",
    "reciprocal_mask",
    "rns_weights",
    "sample_landmarks",
    "select_and_project",
    "synth_generate",
    "topk_indices",
    "topk_mask",
]
