"""Dense matrix helpers: validation, minimum-norm least squares, numerical rank.

Matrices are plain 2-D float64 ``numpy.ndarray`` objects.  Everything here is
a pure function; nothing mutates its inputs.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionError, InvalidInputError

__all__ = ["as_matrix", "least_squares", "numerical_rank", "frobenius_norm"]


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a finite 2-D float64 array, validating as we go."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def least_squares(H, T) -> np.ndarray:
    """Minimum-norm least-squares solution of ``H @ beta ~= T``.

    Uses an SVD-backed solver (pseudo-inverse semantics), so rank-deficient
    ``H`` yields the unique solution of smallest Frobenius norm among all
    minimizers of ``||H @ beta - T||_F``.
    """
    H = as_matrix(H, "H")
    T = as_matrix(T, "T")
    if H.shape[0] != T.shape[0]:
        raise DimensionError(
            f"row mismatch: H has {H.shape[0]} rows, T has {T.shape[0]}"
        )
    if H.shape[0] < 1 or H.shape[1] < 1 or T.shape[1] < 1:
        raise DimensionError(f"degenerate shapes H{H.shape}, T{T.shape}")
    beta, _, _, _ = np.linalg.lstsq(H, T, rcond=None)
    return beta


def numerical_rank(A, tol="auto") -> int:
    """Number of singular values of ``A`` strictly above ``tol``.

    With ``tol="auto"`` the cutoff is ``max(rows, cols) * eps * sigma_max``.
    """
    A = as_matrix(A, "A")
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if isinstance(tol, str):
        if tol != "auto":
            raise InvalidInputError(f"unknown tolerance mode {tol!r}")
        tol = max(A.shape) * np.finfo(np.float64).eps * s[0]
    elif tol < 0:
        raise InvalidInputError(f"tolerance must be nonnegative, got {tol}")
    return int(np.count_nonzero(s > tol))


def frobenius_norm(A) -> float:
    """Square root of the sum of squared entries."""
    arr = np.asarray(A, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("array contains non-finite entries")
    return float(np.sqrt(np.sum(arr * arr)))
