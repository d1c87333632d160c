"""Spectral analysis of selection-projected attention matrices.

For an attention matrix A = X^T X built from unit columns and a 0/1
selection diagonal M, the projected matrix is A_sel = A M A.  The cosine
similarity between vec(A) and vec(A_sel) has three equivalent forms,
computed here by independent routes so they can cross-check each other:

  direct:    vec dot product over vec norms
  trace:     tr(A^T A_sel) / sqrt(tr(A^T A) tr(A_sel^T A_sel))
  spectral:  the same three traces rebuilt from the eigendecomposition
             A = V diag(w) V^T and the rotated selection S = V^T M V:

               tr(A^T A_sel)     = sum_i w_i^3 S_ii
               tr(A^T A)         = sum_i w_i^2
               tr(A_sel^T A_sel) = sum_ij (w_i w_j S_ij)^2

S is an orthogonal projector (S^2 = S), its diagonal lies in [0, 1] and
sums to the selection count m.  The fourth-order trace needs the full
quadratic form in S; it collapses to the diagonal shortcut
sum_i w_i^4 S_ii exactly when S commutes with diag(w)^2, which covers
the two closed-form cases: equal eigenvalues, where the cosine is
sqrt(m/n), and the full selection, where S = I.  For nested selections
the cosine is predicted to be non-decreasing; the checker verifies that
empirically rather than assuming it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import ParameterError, ShapeError, UndefinedCosineError
from .linalg import SYMMETRY_TOL, EigenDecomposition, eigh_symmetric, l2_normalize_rows
from .validation import as_matrix

logger = logging.getLogger(__name__)

EIGENVALUE_FLOOR = -1e-10
EXHAUSTIVE_CAP = 12
MONOTONICITY_SLACK = 1e-12


@dataclass(frozen=True)
class SelectionDiag:
    """Diagonal 0/1 selection: flags[i] == 1 keeps sample i."""

    flags: np.ndarray

    def __post_init__(self):
        flags = np.asarray(self.flags)
        if flags.ndim != 1 or flags.size < 1:
            raise ParameterError("selection flags must be a non-empty 1-D sequence")
        as_int = flags.astype(np.int64)
        if not np.array_equal(as_int, flags) or not np.all((as_int == 0) | (as_int == 1)):
            raise ParameterError("selection flags must be 0/1 valued")
        object.__setattr__(self, "flags", as_int)

    @property
    def n(self) -> int:
        return int(self.flags.size)

    @property
    def m(self) -> int:
        return int(self.flags.sum())

    @classmethod
    def from_indices(cls, indices, n: int) -> "SelectionDiag":
        flags = np.zeros(n, dtype=np.int64)
        flags[np.asarray(indices, dtype=np.int64)] = 1
        return cls(flags=flags)

    @classmethod
    def full(cls, n: int) -> "SelectionDiag":
        return cls(flags=np.ones(n, dtype=np.int64))

    def is_superset_of(self, other: "SelectionDiag") -> bool:
        return self.n == other.n and bool(np.all(self.flags >= other.flags))


@dataclass
class SpectralReport:
    """Eigen-level bookkeeping plus the three cosine formulations."""

    eigenvalues: np.ndarray
    s_diag: np.ndarray
    tr_a_atilde: float
    tr_a_a: float
    tr_atilde_atilde: float
    cos_direct: float
    cos_trace: float
    cos_spectral: float

    def to_dict(self) -> dict:
        return {
            "eigenvalues": self.eigenvalues.tolist(),
            "s_diag": self.s_diag.tolist(),
            "tr_a_atilde": self.tr_a_atilde,
            "tr_a_a": self.tr_a_a,
            "tr_atilde_atilde": self.tr_atilde_atilde,
            "cos_direct": self.cos_direct,
            "cos_trace": self.cos_trace,
            "cos_spectral": self.cos_spectral,
        }


@dataclass
class MonotonicityReport:
    """Cosine sequence along a nested selection chain plus any decreases."""

    selection_sizes: list[int]
    cosines: list[float]
    violations: list[tuple[int, int, float]]

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass
class BoundReport:
    """Full-selection cosine against its stated bracket.

    The lower bound needs an interpretation of the effective eigenvalue
    count ``n_star``; it is reported only when the caller supplies one
    and is never asserted.
    """

    cos_full: float
    upper_bound_ok: bool
    trace_defect: float
    n_star: int | None = None
    lower_bound: float | None = None
    lower_bound_observed_ok: bool | None = None

    def to_dict(self) -> dict:
        return {
            "cos_full": self.cos_full,
            "upper_bound_ok": self.upper_bound_ok,
            "trace_defect": self.trace_defect,
            "n_star": self.n_star,
            "lower_bound": self.lower_bound,
            "lower_bound_observed_ok": self.lower_bound_observed_ok,
        }


def build_attention(x) -> np.ndarray:
    """Gram matrix A = X^T X of a d x n matrix after normalizing columns.

    The result is symmetric PSD with unit diagonal and trace n.
    """
    x = as_matrix(x, "x")
    normalized = l2_normalize_rows(x.T).T
    a = normalized.T @ normalized
    return 0.5 * (a + a.T)


def select_and_project(a, sel: SelectionDiag) -> np.ndarray:
    """Projected attention A M A for a diagonal 0/1 selection M."""
    a = as_matrix(a, "a")
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"attention matrix must be square, got {a.shape}")
    if sel.n != a.shape[0]:
        raise ShapeError(f"selection length {sel.n} does not match matrix size {a.shape[0]}")
    return (a * sel.flags[None, :]) @ a


def cosine_direct(a, atilde) -> float:
    """Cosine between the two matrices flattened to vectors."""
    a = as_matrix(a, "a")
    atilde = as_matrix(atilde, "atilde")
    if a.shape != atilde.shape:
        raise ShapeError(f"matrices must share a shape, got {a.shape} and {atilde.shape}")
    va = a.ravel()
    vt = atilde.ravel()
    norm_a = float(np.sqrt(va @ va))
    norm_t = float(np.sqrt(vt @ vt))
    if norm_a == 0.0 or norm_t == 0.0:
        raise UndefinedCosineError("cosine undefined: zero-norm matrix")
    return float(np.clip((va @ vt) / (norm_a * norm_t), -1.0, 1.0))


def _check_symmetric(a: np.ndarray) -> np.ndarray:
    defect = float(np.max(np.abs(a - a.T)))
    if defect > SYMMETRY_TOL:
        raise ShapeError(f"attention matrix is not symmetric: max |A - A^T| = {defect:.3e}")
    return a


def cosine_trace(a, sel: SelectionDiag) -> float:
    """Cosine via the three explicit traces of A and A_sel = A M A."""
    a = as_matrix(a, "a")
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"attention matrix must be square, got {a.shape}")
    _check_symmetric(a)
    atilde = select_and_project(a, sel)
    tr_cross = float(np.sum(a.T * atilde))
    tr_aa = float(np.sum(a.T * a))
    tr_tt = float(np.sum(atilde.T * atilde))
    if tr_tt == 0.0:
        raise UndefinedCosineError("cosine undefined: selection produced a zero matrix")
    return float(np.clip(tr_cross / np.sqrt(tr_aa * tr_tt), -1.0, 1.0))


def _selected_energy(decomposition: EigenDecomposition, sel: SelectionDiag) -> np.ndarray:
    # s_i = sum_j flags_j * V[j, i]^2, the diagonal of V^T M V.
    v = decomposition.eigenvectors
    return (v * v).T @ sel.flags.astype(np.float64)


def spectral_traces(
    decomposition: EigenDecomposition, sel: SelectionDiag
) -> tuple[float, float, float]:
    """The three traces rebuilt from eigen data only.

    Returns (tr(A^T A_sel), tr(A^T A), tr(A_sel^T A_sel)) computed from
    the clamped eigenvalues w and the rotated selection S = V^T M V:
    sum w^3 S_ii, sum w^2, and the full quadratic form
    sum_ij (w_i w_j S_ij)^2.
    """
    w = clamped_eigenvalues(decomposition)
    v = decomposition.eigenvectors
    selected_rows = v[sel.flags.astype(bool), :]
    s_diag = np.einsum("ti,ti->i", selected_rows, selected_rows)
    t1 = float(np.sum(w**3 * s_diag))
    t2 = float(np.sum(w**2))
    s_full = selected_rows.T @ selected_rows
    scaled = s_full * w[:, None] * w[None, :]
    t3 = float(np.sum(scaled * scaled))
    return t1, t2, t3


def clamped_eigenvalues(decomposition: EigenDecomposition) -> np.ndarray:
    """Eigenvalues with numerical-noise negatives clamped to zero.

    Values in [-1e-10, 0) are floored to 0; anything below that is a
    genuine PSD violation and is only warned about, not altered.
    """
    w = decomposition.eigenvalues
    if np.any(w < EIGENVALUE_FLOOR):
        logger.warning(
            "attention matrix is not PSD: smallest eigenvalue %.3e", float(w.min())
        )
    return np.where((w < 0.0) & (w >= EIGENVALUE_FLOOR), 0.0, w)


def cosine_spectral(
    a, sel: SelectionDiag, decomposition: EigenDecomposition | None = None
) -> SpectralReport:
    """All three cosine formulations plus the eigen-level bookkeeping.

    Pass a precomputed ``decomposition`` to amortize the eigensolve when
    scanning many selections of one matrix.
    """
    a = as_matrix(a, "a")
    if sel.n != a.shape[0]:
        raise ShapeError(f"selection length {sel.n} does not match matrix size {a.shape[0]}")
    if decomposition is None:
        decomposition = eigh_symmetric(a)
    s = _selected_energy(decomposition, sel)
    t1s, t2s, t3s = spectral_traces(decomposition, sel)
    if t2s == 0.0 or t3s == 0.0:
        raise UndefinedCosineError("cosine undefined: selection carries no spectral energy")
    cos_spec = float(np.clip(np.sqrt(t1s**2 / (t2s * t3s)), -1.0, 1.0))

    atilde = select_and_project(a, sel)
    cos_dir = cosine_direct(a, atilde)
    cos_tr = cosine_trace(a, sel)
    return SpectralReport(
        eigenvalues=decomposition.eigenvalues.copy(),
        s_diag=s,
        tr_a_atilde=float(np.sum(a.T * atilde)),
        tr_a_a=float(np.sum(a.T * a)),
        tr_atilde_atilde=float(np.sum(atilde.T * atilde)),
        cos_direct=cos_dir,
        cos_trace=cos_tr,
        cos_spectral=cos_spec,
    )


def spectral_cosine_only(
    decomposition: EigenDecomposition, sel: SelectionDiag
) -> float:
    """Spectral-form cosine from a precomputed decomposition; never
    touches the original matrix."""
    t1, t2, t3 = spectral_traces(decomposition, sel)
    if t2 == 0.0 or t3 == 0.0:
        raise UndefinedCosineError("cosine undefined: selection carries no spectral energy")
    return float(np.clip(np.sqrt(t1**2 / (t2 * t3)), -1.0, 1.0))


def nested_monotonicity_check(a, chain: list[SelectionDiag]) -> MonotonicityReport:
    """Cosine sequence along a nested selection chain.

    Each selection must be a superset of the previous one.  Adjacent
    decreases beyond 1e-12 are recorded as violations; the claim that the
    sequence never decreases is checked, not assumed.
    """
    a = as_matrix(a, "a")
    if not chain:
        raise ParameterError("chain must contain at least one selection")
    for prev, cur in zip(chain, chain[1:]):
        if not cur.is_superset_of(prev):
            raise ParameterError("chain is not nested: each selection must contain the previous")
    decomposition = eigh_symmetric(a)
    cosines = [spectral_cosine_only(decomposition, sel) for sel in chain]
    violations = []
    for i in range(len(cosines) - 1):
        drop = cosines[i] - cosines[i + 1]
        if drop > MONOTONICITY_SLACK:
            violations.append((i, i + 1, float(drop)))
    return MonotonicityReport(
        selection_sizes=[sel.m for sel in chain],
        cosines=cosines,
        violations=violations,
    )


@dataclass
class ExhaustiveScan:
    """Spectral cosines for every non-empty selection of one matrix.

    ``cosines[mask]`` is indexed by the selection bitmask (bit j selects
    sample j); the empty selection is NaN.  ``edge_violations`` lists
    every (mask, added_index, drop) where adding one sample decreased the
    cosine by more than 1e-12.  Every maximal nested chain is a path over
    these one-sample edges, so an empty violation list certifies
    monotonicity along all maximal chains at once.
    """

    n: int
    cosines: np.ndarray
    edge_violations: list[tuple[int, int, float]]


def exhaustive_selection_scan(
    a, decomposition: EigenDecomposition | None = None
) -> ExhaustiveScan:
    """Scan all 2^n - 1 non-empty selections (n <= 12)."""
    a = as_matrix(a, "a")
    n = a.shape[0]
    if n > EXHAUSTIVE_CAP:
        raise ParameterError(f"exhaustive scan capped at n <= {EXHAUSTIVE_CAP}, got {n}")
    if decomposition is None:
        decomposition = eigh_symmetric(a)
    w = clamped_eigenvalues(decomposition)
    v = decomposition.eigenvectors
    v2 = v**2

    masks = np.arange(1 << n, dtype=np.int64)
    flag_matrix = ((masks[:, None] >> np.arange(n)[None, :]) & 1).astype(np.float64)
    s_diag_all = flag_matrix @ v2  # (2^n, n); row per mask, col per eigenvector index
    sum_w2 = float(np.sum(w**2))
    num = s_diag_all @ (w**3)
    # Fourth-order trace per mask: f^T [(V w^2 V^T) hadamard^2] f.
    squared = (v * w[None, :] ** 2) @ v.T
    fourth_kernel = squared * squared
    den = np.einsum("si,ij,sj->s", flag_matrix, fourth_kernel, flag_matrix)
    with np.errstate(divide="ignore", invalid="ignore"):
        cosines = np.sqrt(num**2 / (sum_w2 * den))
    cosines[0] = np.nan  # empty selection: undefined
    cosines = np.clip(cosines, -1.0, 1.0)

    violations: list[tuple[int, int, float]] = []
    for j in range(n):
        bit = 1 << j
        parents = masks[(masks & bit) == 0]
        parents = parents[parents != 0]
        drops = cosines[parents] - cosines[parents | bit]
        for idx in np.flatnonzero(drops > MONOTONICITY_SLACK):
            violations.append((int(parents[idx]), j, float(drops[idx])))
    return ExhaustiveScan(n=n, cosines=cosines, edge_violations=violations)


def bound_check(a, n_star: int | None = None) -> BoundReport:
    """Full-selection cosine against its bracket.

    Always checks cos(full) <= 1 and reports tr(A) - n.  The lower bound
    sqrt((n/n_star)^3) is included only when the caller supplies an
    ``n_star`` interpretation, and is reported rather than asserted.
    """
    a = as_matrix(a, "a")
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"attention matrix must be square, got {a.shape}")
    n = a.shape[0]
    decomposition = eigh_symmetric(a)
    cos_full = spectral_cosine_only(decomposition, SelectionDiag.full(n))
    trace_defect = float(np.trace(a) - n)
    report = BoundReport(
        cos_full=cos_full,
        upper_bound_ok=cos_full <= 1.0 + 1e-12,
        trace_defect=trace_defect,
    )
    if n_star is not None:
        if n_star < 1:
            raise ParameterError(f"n_star must be >= 1, got {n_star}")
        lower = float(np.sqrt((n / n_star) ** 3))
        report.n_star = int(n_star)
        report.lower_bound = lower
        report.lower_bound_observed_ok = bool(lower <= cos_full + 1e-12)
    return report
