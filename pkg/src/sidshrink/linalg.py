"""Structured-matrix helpers: block Hankel builders, Toeplitz selectors,
symmetric matrix roots, pseudo-determinants.

Vectorisation convention: vec() stacks columns (column-major), matching the
selector matrices built here. All functions are pure and never mutate their
arguments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError

__all__ = [
    "SelectorPair",
    "vec",
    "build_hankel",
    "build_selectors",
    "psd_sqrt",
    "pseudo_det",
    "toeplitz_project",
    "toeplitz_from_col",
]


def vec(m: np.ndarray) -> np.ndarray:
    """Column-major vectorisation of a matrix."""
    return np.asarray(m, dtype=float).ravel(order="F")


def build_hankel(signal, block_rows: int, cols: int, start: int = 0) -> np.ndarray:
    """Block Hankel matrix of a vector-valued signal.

    Parameters
    ----------
    signal : array_like, shape (T,) or (T, d)
        Time series; each row is one sample.
    block_rows : int
        Number of block rows (each contributes d scalar rows).
    cols : int
        Number of columns.
    start : int
        Index of the sample placed in the top-left block.

    Block (k, l) equals signal[start + k + l], so every anti-diagonal of
    blocks is constant.
    """
    s = np.asarray(signal, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    if block_rows < 1 or cols < 1:
        raise ValueError("block_rows and cols must be positive")
    t = s.shape[0]
    need = start + block_rows + cols - 1
    if start < 0 or t < need:
        raise DataError(
            f"signal too short: need {need} samples from index {start}, have {t}"
        )
    idx = start + np.arange(block_rows)[:, None] + np.arange(cols)[None, :]
    # (block_rows, cols, d) -> (block_rows, d, cols) -> stack the d rows per block
    out = s[idx].transpose(0, 2, 1)
    return out.reshape(block_rows * s.shape[1], cols)


@dataclass(frozen=True)
class SelectorPair:
    """0/1 structural maps for an i x i lower-triangular Toeplitz matrix and
    an i x n scalar Hankel matrix.

    b_t (i^2 x i): vec(G) = b_t @ last_row(G), with vec column-major.
    b_w (i*n x (i+n-1)): vec(H) = b_w @ e, where H[k, l] = e[k + l].
    """

    b_t: np.ndarray
    b_w: np.ndarray
    i: int
    n: int


def build_selectors(i: int, n: int) -> SelectorPair:
    """Build the selector pair (b_t, b_w) for sizes (i, n).

    Rows of b_t corresponding to strictly upper-triangular positions are all
    zero; every row of b_w contains exactly one 1. b_w' b_w is diagonal and
    counts anti-diagonal multiplicities.
    """
    if i < 1 or n < 1:
        raise ValueError("selector sizes must be positive")
    b_t = np.zeros((i * i, i))
    k, l = np.meshgrid(np.arange(i), np.arange(i), indexing="ij")
    low = k >= l
    # entry (k, l) of G holds last_row element i-1-k+l
    b_t[(k + l * i)[low], (i - 1 - k + l)[low]] = 1.0

    b_w = np.zeros((i * n, i + n - 1))
    k, l = np.meshgrid(np.arange(i), np.arange(n), indexing="ij")
    b_w[(k + l * i).ravel(), (k + l).ravel()] = 1.0
    return SelectorPair(b_t=b_t, b_w=b_w, i=i, n=n)


def psd_sqrt(m: np.ndarray, inverse: bool = False, tol: float = 1e-12) -> np.ndarray:
    """Symmetric square root of a positive semidefinite matrix.

    Eigenvalues below zero (rounding noise) are clipped to zero. With
    inverse=True the inverse square root is returned and the matrix must be
    positive definite: a minimum eigenvalue at or below tol * max(|eig|)
    raises NumericalError.
    """
    a = np.asarray(m, dtype=float)
    a = (a + a.T) / 2.0
    w, v = np.linalg.eigh(a)
    if inverse:
        floor = tol * max(abs(w[-1]), np.finfo(float).tiny)
        if w[0] <= floor:
            raise NumericalError(
                f"matrix not positive definite: min eigenvalue {w[0]:.3e}"
            )
        d = 1.0 / np.sqrt(w)
    else:
        d = np.sqrt(np.clip(w, 0.0, None))
    out = (v * d) @ v.T
    return (out + out.T) / 2.0


def pseudo_det(m: np.ndarray, tol: float = 1e-10) -> float:
    """Product of singular values above tol * s_max (pseudo-determinant).

    The all-zero matrix returns 1.0 (empty product convention).
    """
    a = np.asarray(m, dtype=float)
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] <= 0.0:
        return 1.0
    keep = s[s > tol * s[0]]
    return float(np.prod(keep))


def toeplitz_project(m: np.ndarray) -> np.ndarray:
    """Orthogonal (Frobenius) projection onto lower-triangular Toeplitz
    matrices.

    The k-th subdiagonal of the result is the arithmetic mean of the k-th
    subdiagonal of m; everything above the diagonal is zeroed. For matrices
    that already have the structure this is the identity.
    """
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("toeplitz_project expects a square matrix")
    n = a.shape[0]
    col = np.array([np.diagonal(a, -d).mean() for d in range(n)])
    return toeplitz_from_col(col)


def toeplitz_from_col(col: np.ndarray) -> np.ndarray:
    """Lower-triangular Toeplitz matrix with the given first column."""
    c = np.asarray(col, dtype=float)
    n = c.shape[0]
    out = np.zeros((n, n))
    k, l = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    low = k >= l
    out[low] = c[(k - l)[low]]
    return out
