"""Input validation helpers shared by the numerical modules.

All public entry points funnel array arguments through these helpers so
that shape and finiteness violations surface as package exceptions with
the offending argument named, instead of as cryptic numpy broadcasts.
"""

from __future__ import annotations

import numpy as np

from .exceptions import NonFiniteInputError, ParameterError, ShapeError


def as_matrix(x, name: str = "x") -> np.ndarray:
    """Coerce ``x`` to a finite 2-D float64 array with at least one row/col."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be a 2-D matrix, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must have at least one row and column, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInputError(f"{name} contains NaN or infinite entries")
    return arr


def as_vector(x, name: str = "x") -> np.ndarray:
    """Coerce ``x`` to a finite 1-D float64 array of length >= 1."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be a 1-D vector, got ndim={arr.ndim}")
    if arr.size < 1:
        raise ShapeError(f"{name} must have at least one entry")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInputError(f"{name} contains NaN or infinite entries")
    return arr


def check_square(a: np.ndarray, name: str = "a") -> np.ndarray:
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {a.shape}")
    return a


def check_same_shape(a: np.ndarray, b: np.ndarray, names: str = "a, b") -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{names} must have identical shapes, got {a.shape} and {b.shape}")


def check_index(value: int, low: int, high: int, name: str) -> int:
    """Validate an integer parameter in the closed range [low, high]."""
    value = int(value)
    if not low <= value <= high:
        raise ParameterError(f"{name} must be in [{low}, {high}], got {value}")
    return value
