"""Vectorization helpers for symmetric matrices and Kronecker products.

The half-vectorizations below use row-major ordering of the upper
triangle. Off-diagonal entries are doubled by ``vecs`` and ``vecu`` so that
``x @ P @ x == vecv(x) @ vecs(P)`` holds for every symmetric ``P``.
"""

import numpy as np

__all__ = [
    "vec", "vec_inv", "vecs", "vecs_inv", "vecu", "diag", "vecd", "vecv",
    "vecp", "kron", "tri_size", "upper_pairs",
]

SYM_RTOL = 1e-10


def _square(A, name="A"):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise ValueError(f"{name} must be a non-empty square matrix, got shape {A.shape}")
    return A


def _check_symmetric(P):
    scale = max(np.max(np.abs(P)), 1.0)
    if np.max(np.abs(P - P.T)) > SYM_RTOL * scale:
        raise ValueError("matrix is not symmetric within tolerance")


def _vector(v, name):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D vector")
    return v


def tri_size(n, strict=False):
    """Number of entries in the (strict) upper triangle of an n x n matrix."""
    return n * (n - 1) // 2 if strict else n * (n + 1) // 2


def upper_pairs(n, strict=False):
    """Row-major index arrays ``(rows, cols)`` of the upper triangle."""
    rows, cols = np.triu_indices(n, k=1 if strict else 0)
    return rows, cols


def vec(A):
    """Stack the columns of a square matrix into one vector."""
    A = _square(A)
    return A.reshape(-1, order="F").copy()


def vec_inv(v, shape):
    """Inverse of column stacking for an arbitrary ``shape``."""
    v = np.asarray(v, dtype=float)
    if v.size != shape[0] * shape[1]:
        raise ValueError(f"cannot reshape vector of length {v.size} into {shape}")
    return v.reshape(shape, order="F").copy()


def vecs(P):
    P = _square(P, "P")
    _check_symmetric(P)
    r, c = upper_pairs(P.shape[0])
    w = P[r, c].copy()
    w[r != c] *= 2.0
    return w


def vecs_inv(w):
    w = np.asarray(w, dtype=float)
    if w.ndim != 1:
        raise ValueError("vecs_inv expects a 1-D vector")
    n = int(round((np.sqrt(8 * w.size + 1) - 1) / 2))
    if n < 1 or tri_size(n) != w.size:
        raise ValueError(f"length {w.size} is not a triangular number")
    r, c = upper_pairs(n)
    vals = np.where(r == c, w, 0.5 * w)
    P = np.zeros((n, n))
    P[r, c] = vals
    P[c, r] = vals
    return P


def vecu(P):
    P = _square(P, "P")
    _check_symmetric(P)
    r, c = upper_pairs(P.shape[0], strict=True)
    return 2.0 * P[r, c]


def diag(P):
    P = _square(P, "P")
    _check_symmetric(P)
    return np.diag(P).copy()


def vecd(nu, mu):
    nu, mu = _vector(nu, "nu"), _vector(mu, "mu")
    if nu.shape != mu.shape:
        raise ValueError("vecd requires vectors of equal length")
    return nu * mu


def vecv(nu):
    nu = _vector(nu, "nu")
    r, c = upper_pairs(nu.size)
    return nu[r] * nu[c]


def vecp(nu, mu):
    nu, mu = _vector(nu, "nu"), _vector(mu, "mu")
    if nu.shape != mu.shape:
        raise ValueError("vecp requires vectors of equal length")
    r, c = upper_pairs(nu.size, strict=True)
    return nu[r] * mu[c]


def kron(A, B):
    return np.kron(np.atleast_2d(np.asarray(A, dtype=float)),
                   np.atleast_2d(np.asarray(B, dtype=float)))
