"""Linear algebra on symmetric matrices.

Vectorizations, the duplication matrix, Kronecker products, a
pseudo-inverse for PSD matrices and the operator norms used by the
bounds.

Conventions
-----------
``vec`` stacks columns (Fortran order). ``vecp`` stacks the strict lower
triangle column by column: the pairs ``(i, j)`` with ``i > j`` ordered by
``j`` and then by ``i``. Every half-vector in the package uses this
ordering.
"""
from functools import lru_cache

import numpy as np

__all__ = [
    "as_symmetric",
    "half_dim",
    "dim_from_half",
    "lower_pairs",
    "vec",
    "unvec",
    "vecp",
    "unvecp",
    "duplication_matrix",
    "kron",
    "pinv",
    "opnorm_inf",
    "mahalanobis_norm",
    "sym_sqrt",
]


def as_symmetric(X, atol=0.0):
    """Validate ``X`` as a symmetric matrix of size at least 2.

    Parameters
    ----------
    X : array_like, shape (p, p)
    atol : float
        If positive, entries may differ from their transpose by up to
        ``atol`` and the result is symmetrized. With ``atol=0`` exact
        symmetry is required.

    Returns
    -------
    ndarray
        A float copy of ``X``.
    """
    X = np.array(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError("expected a square matrix, got shape %s" % (X.shape,))
    if X.shape[0] < 2:
        raise ValueError("dimension must be at least 2")
    if not np.all(np.isfinite(X)):
        raise ValueError("matrix has non-finite entries")
    asym = np.max(np.abs(X - X.T))
    if asym > atol:
        raise ValueError("matrix is not symmetric (max asymmetry %.3g)" % asym)
    if atol > 0:
        X = 0.5 * (X + X.T)
    return X


def half_dim(p):
    """Number of strict lower-triangular entries, ``p(p-1)/2``."""
    return p * (p - 1) // 2


def dim_from_half(m):
    """Invert :func:`half_dim`; raises if ``m`` is not triangular."""
    p = int(round((1 + np.sqrt(1 + 8 * m)) / 2))
    if half_dim(p) != m:
        raise ValueError("%d is not of the form p(p-1)/2" % m)
    return p


@lru_cache(maxsize=64)
def _lower_index(p):
    # numpy's tril_indices is row-major; reorder to column-major
    cols, rows = np.triu_indices(p, k=1)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def lower_pairs(p):
    """Row and column indices of the half-vectorization, in order.

    Returns
    -------
    rows, cols : ndarray of int
        ``vecp(X)[k] == X[rows[k], cols[k]]`` with ``rows > cols``.
    """
    return _lower_index(p)


def vec(X):
    """Column-major vectorization of a square matrix."""
    X = np.asarray(X, dtype=float)
    return X.reshape(-1, order="F")


def unvec(x, p=None):
    """Inverse of :func:`vec`."""
    x = np.asarray(x, dtype=float)
    if p is None:
        p = int(round(np.sqrt(x.size)))
    if p * p != x.size:
        raise ValueError("length %d is not a perfect square" % x.size)
    return x.reshape((p, p), order="F")


def vecp(X):
    """Strict lower triangle of ``X`` as a vector of length ``p(p-1)/2``."""
    X = np.asarray(X, dtype=float)
    rows, cols = lower_pairs(X.shape[0])
    return X[rows, cols]


def unvecp(h, diag=None):
    """Rebuild a symmetric matrix from its half-vectorization.

    Parameters
    ----------
    h : array_like, shape (m,)
    diag : array_like, shape (p,), optional
        Diagonal of the result; zeros if omitted.
    """
    h = np.asarray(h, dtype=float)
    p = dim_from_half(h.size)
    X = np.zeros((p, p))
    rows, cols = lower_pairs(p)
    X[rows, cols] = h
    X[cols, rows] = h
    if diag is not None:
        X[np.diag_indices(p)] = diag
    return X


@lru_cache(maxsize=16)
def _duplication(p):
    rows, cols = lower_pairs(p)
    m = rows.size
    D = np.zeros((p * p, m))
    k = np.arange(m)
    D[rows + cols * p, k] = 1.0
    D[cols + rows * p, k] = 1.0
    D.setflags(write=False)
    return D


def duplication_matrix(p):
    """Duplication matrix ``D`` with ``D @ vecp(X) == vec(X)``.

    Valid for symmetric ``X`` with zero diagonal. The returned array is
    cached and read-only.
    """
    if p < 2:
        raise ValueError("dimension must be at least 2")
    return _duplication(p)


def kron(A, B):
    """Kronecker product, so that ``vec(A X B) == kron(B.T, A) @ vec(X)``."""
    return np.kron(np.asarray(A, dtype=float), np.asarray(B, dtype=float))


def pinv(A, rank_tol=1e-10):
    """Moore-Penrose inverse of a symmetric positive semidefinite matrix.

    Eigenvalues below ``rank_tol * max(eigenvalues)`` are treated as zero.
    """
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    A = 0.5 * (A + A.T)
    w, V = np.linalg.eigh(A)
    top = max(w[-1], 0.0) if w.size else 0.0
    keep = w > rank_tol * top
    if not np.any(keep):
        return np.zeros_like(A)
    Vk = V[:, keep]
    return (Vk / w[keep]) @ Vk.T


def opnorm_inf(A):
    """Maximum absolute row sum."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return float(np.abs(A).sum(axis=1).max())


def sym_sqrt(A):
    """Principal square root of a symmetric positive definite matrix."""
    w, V = np.linalg.eigh(np.asarray(A, dtype=float))
    if w[0] <= 0:
        raise ValueError("matrix is not positive definite")
    return (V * np.sqrt(w)) @ V.T


def mahalanobis_norm(x, Kstar):
    """Norm induced by ``<x, y> = x^T (Sigma* kron Sigma*)^{-1} y``.

    Computed as ``||K^{1/2} X K^{1/2}||_F`` where ``X = unvec(x)``, which
    avoids forming the p^2 x p^2 matrix.
    """
    Kstar = np.asarray(Kstar, dtype=float)
    p = Kstar.shape[0]
    try:
        np.linalg.cholesky(Kstar)
    except np.linalg.LinAlgError:
        raise ValueError("Kstar is not positive definite") from None
    R = sym_sqrt(Kstar)
    X = unvec(x, p)
    return float(np.linalg.norm(R @ X @ R, "fro"))
