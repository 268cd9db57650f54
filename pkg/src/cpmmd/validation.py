"""Input validation helpers used by the public entry points."""

from __future__ import annotations

import numpy as np

from .errors import ContractViolationError


def check_matrix(a, name: str = "X", min_rows: int = 1) -> np.ndarray:
    """Coerce ``a`` to a 2-D float64 array of finite values."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ContractViolationError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.shape[0] < min_rows:
        raise ContractViolationError(
            f"{name} needs at least {min_rows} rows, got {arr.shape[0]}")
    if arr.shape[1] < 1:
        raise ContractViolationError(f"{name} has no columns")
    if not np.all(np.isfinite(arr)):
        raise ContractViolationError(f"{name} contains non-finite values")
    return arr


def check_two_samples(X, Y, min_rows: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Validate a two-sample pair: both 2-D, finite, same dimension."""
    X = check_matrix(X, "X", min_rows=min_rows)
    Y = check_matrix(Y, "Y", min_rows=min_rows)
    if X.shape[1] != Y.shape[1]:
        raise ContractViolationError(
            f"X and Y dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    return X, Y


def check_vector(v, name: str = "u") -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ContractViolationError(f"{name} must be 1-D, got ndim={arr.ndim}")
    return arr
