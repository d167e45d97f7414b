"""Half-vectorization, duplication matrices and covariance/correlation helpers.

Every vech in the package uses the column-major lower-triangle ordering
(s11, s21, ..., sn1, s22, s32, ..., snn).
"""

from functools import lru_cache
from typing import Tuple

import numpy as np

from .errors import DegenerateCovariance, InvalidInput

SYMMETRY_TOL = 1e-12


def symmetrize(m: np.ndarray) -> np.ndarray:
    arr = np.asarray(m, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {arr.shape}")
    return 0.5 * (arr + arr.T)


def _check_symmetric(m: np.ndarray) -> np.ndarray:
    arr = np.asarray(m, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {arr.shape}")
    gap = np.max(np.abs(arr - arr.T)) if arr.size else 0.0
    if gap > SYMMETRY_TOL:
        raise InvalidInput(f"matrix is not symmetric (max asymmetry {gap:.3e})")
    return arr


def vech_size(n: int) -> int:
    return n * (n + 1) // 2


def dimension_from_vech(length: int) -> int:
    n = int(round((np.sqrt(8 * length + 1) - 1) / 2))
    if n < 1 or vech_size(n) != length:
        raise InvalidInput(f"length {length} is not a triangular number")
    return n


@lru_cache(maxsize=None)
def vech_positions(n: int) -> Tuple[np.ndarray, np.ndarray]:
    # rows/cols of the lower triangle read column by column
    cols, rows = np.triu_indices(n)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def vech(m: np.ndarray) -> np.ndarray:
    arr = _check_symmetric(m)
    rows, cols = vech_positions(arr.shape[0])
    return arr[rows, cols].copy()


def vech_inv(v: np.ndarray) -> np.ndarray:
    values = np.asarray(v, dtype=float)
    if values.ndim != 1:
        raise InvalidInput("vech_inv expects a one-dimensional vector")
    n = dimension_from_vech(values.shape[0])
    rows, cols = vech_positions(n)
    out = np.empty((n, n))
    out[rows, cols] = values
    out[cols, rows] = values
    return out


def vech_stack(ms: np.ndarray) -> np.ndarray:
    """vech of every matrix in a (T, n, n) stack, returned as (T, m)."""
    arr = np.asarray(ms, dtype=float)
    rows, cols = vech_positions(arr.shape[-1])
    return arr[:, rows, cols]


@lru_cache(maxsize=None)
def duplication(n: int) -> np.ndarray:
    if n < 1:
        raise InvalidInput("duplication matrix needs n >= 1")
    rows, cols = vech_positions(n)
    d = np.zeros((n * n, vech_size(n)))
    for k, (i, j) in enumerate(zip(rows, cols)):
        # vec is column-major: entry (i, j) sits at j * n + i
        d[j * n + i, k] = 1.0
        d[i * n + j, k] = 1.0
    d.setflags(write=False)
    return d


@lru_cache(maxsize=None)
def duplication_pinv(n: int) -> np.ndarray:
    d = duplication(n)
    p = np.linalg.solve(d.T @ d, d.T)
    p.setflags(write=False)
    return p


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(np.atleast_1d(a), np.atleast_1d(b))


def vec(m: np.ndarray) -> np.ndarray:
    return np.asarray(m, dtype=float).flatten(order="F")


def cov_to_cor(sigma: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    arr = symmetrize(sigma)
    diag = np.diag(arr)
    if np.any(diag <= 0):
        raise DegenerateCovariance("covariance has a nonpositive diagonal entry")
    sd = np.sqrt(diag)
    corr = arr / np.outer(sd, sd)
    np.fill_diagonal(corr, 1.0)
    return corr, np.diag(sd)


def aggregation_vector(weights: np.ndarray) -> np.ndarray:
    w = np.asarray(weights, dtype=float).ravel()
    return duplication(w.shape[0]).T @ np.kron(w, w)


def scaled_aggregation_vector(weights: np.ndarray, stdevs: np.ndarray) -> np.ndarray:
    """D'(S kron S)(w kron w), the aggregation vector acting on vech of a correlation matrix."""
    return aggregation_vector(np.asarray(stdevs, dtype=float) * np.asarray(weights, dtype=float))


def is_positive_definite(m: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        return False
    return True
