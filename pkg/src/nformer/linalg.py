"""Dense matrix substrate: products, symmetric eigendecomposition, row
normalization and deterministic top-k selection.

Everything here is a pure function of its inputs and is deterministic for
a given build: products go through numpy's fixed BLAS kernels, reductions
run in 64-bit floats, and ties in top-k selection always resolve to the
smallest index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConvergenceError, DegenerateInputError, ParameterError, ShapeError
from .validation import as_matrix, as_vector

ROW_NORM_FLOOR = 1e-12
SYMMETRY_TOL = 1e-8


@dataclass(frozen=True)
class EigenDecomposition:
    """Spectral factorization A = V diag(w) V^T of a symmetric matrix.

    ``eigenvalues`` are sorted descending; ``eigenvectors`` holds the
    matching eigenvectors as columns of an orthogonal matrix.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues[None, :]) @ v.T


def matmul(a, b) -> np.ndarray:
    """Matrix product a @ b with shape checking.

    Delegates to numpy's BLAS product, which is bit-reproducible for a
    given build and thread count.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions must agree: {a.shape} x {b.shape}")
    return a @ b


def l2_normalize_rows(x) -> np.ndarray:
    """Scale every row of ``x`` to unit Euclidean norm.

    Raises DegenerateInputError naming the first offending row if any row
    norm falls below 1e-12.
    """
    x = as_matrix(x, "x")
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    bad = np.flatnonzero(norms < ROW_NORM_FLOOR)
    if bad.size:
        raise DegenerateInputError(
            f"row {int(bad[0])} has norm {norms[bad[0]]:.3e} < {ROW_NORM_FLOOR:g}; cannot normalize"
        )
    return x / norms[:, None]


def topk_indices(row, k: int) -> np.ndarray:
    """Indices of the k largest entries of ``row``, as a sorted array.

    Ties resolve to the smallest index so results are identical across
    runs and platforms.
    """
    row = as_vector(row, "row")
    if not 1 <= k <= row.size:
        raise ParameterError(f"k must be in [1, {row.size}], got {k}")
    # Stable sort of the negated values keeps the original (ascending
    # index) order among equal entries.
    order = np.argsort(-row, kind="stable")
    return np.sort(order[:k])


def _jacobi_rotate(w: np.ndarray, v: np.ndarray, p: int, q: int) -> None:
    """Apply one two-sided Jacobi rotation zeroing w[p, q] in place."""
    apq = w[p, q]
    diff = w[q, q] - w[p, p]
    theta = diff / (2.0 * apq)
    if abs(theta) > 1e150:
        # Avoid overflow in theta**2; asymptotic small-angle root.
        t = 1.0 / (2.0 * theta)
    else:
        t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
        if theta == 0.0:
            t = 1.0
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c

    col_p = w[:, p].copy()
    col_q = w[:, q].copy()
    w[:, p] = c * col_p - s * col_q
    w[:, q] = s * col_p + c * col_q
    row_p = w[p, :].copy()
    row_q = w[q, :].copy()
    w[p, :] = c * row_p - s * row_q
    w[q, :] = s * row_p + c * row_q
    w[p, q] = 0.0
    w[q, p] = 0.0

    vec_p = v[:, p].copy()
    vec_q = v[:, q].copy()
    v[:, p] = c * vec_p - s * vec_q
    v[:, q] = s * vec_p + c * vec_q


def _offdiag_frobenius(w: np.ndarray) -> float:
    off = w - np.diag(np.diag(w))
    return float(np.sqrt(np.sum(off * off)))


def eigh_symmetric(a, max_sweeps: int = 100, off_tol: float = 1e-12) -> EigenDecomposition:
    """Eigendecomposition of a real symmetric matrix by cyclic Jacobi sweeps.

    The input is symmetrized as (A + A^T)/2 before the solve; asymmetry
    beyond 1e-8 (max norm) is rejected.  Sweeps stop once the off-diagonal
    Frobenius norm drops below ``off_tol`` relative to the matrix scale;
    exceeding ``max_sweeps`` raises ConvergenceError carrying the residual.
    """
    a = as_matrix(a, "a")
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"eigendecomposition requires a square matrix, got {a.shape}")
    defect = float(np.max(np.abs(a - a.T)))
    if defect > SYMMETRY_TOL:
        raise ShapeError(f"matrix is not symmetric: max |A - A^T| = {defect:.3e} > {SYMMETRY_TOL:g}")

    n = a.shape[0]
    w = 0.5 * (a + a.T)
    v = np.eye(n)
    scale = max(1.0, float(np.sqrt(np.sum(w * w))))
    threshold = off_tol * scale
    # Entries below this never get rotated; their combined Frobenius mass
    # stays under the sweep threshold.
    rotate_floor = threshold / max(1, n)

    if n == 1:
        return EigenDecomposition(eigenvalues=np.diag(w).copy(), eigenvectors=v)

    converged = _offdiag_frobenius(w) <= threshold
    for _ in range(max_sweeps):
        if converged:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(w[p, q]) > rotate_floor:
                    _jacobi_rotate(w, v, p, q)
        converged = _offdiag_frobenius(w) <= threshold
    if not converged:
        residual = _offdiag_frobenius(w)
        raise ConvergenceError(
            f"Jacobi sweeps did not converge in {max_sweeps} sweeps; "
            f"off-diagonal Frobenius residual {residual:.3e} (threshold {threshold:.3e})",
            defect=residual,
        )

    eigenvalues = np.diag(w).copy()
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = eigenvalues[order]
    vectors = v[:, order]
    # Canonical sign: the largest-magnitude component of each eigenvector
    # is positive.
    lead = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[lead, np.arange(n)])
    signs[signs == 0] = 1.0
    vectors = vectors * signs[None, :]
    return EigenDecomposition(eigenvalues=eigenvalues, eigenvectors=vectors)
