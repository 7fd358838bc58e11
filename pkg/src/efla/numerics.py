"""Dense float64 helpers shared by the rest of the package.

Vectors and matrices are plain ``numpy.ndarray`` objects. The ``as_vector`` /
``as_matrix`` helpers coerce to contiguous float64 and reject non-finite
entries; everything downstream assumes that has already happened.
"""
import numpy as np

__all__ = [
    "as_vector",
    "as_matrix",
    "dot",
    "outer",
    "matvec_transposed",
    "unit_lower_solve",
    "frobenius_norm",
]


def as_vector(x, name="vector"):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def as_matrix(x, name="matrix"):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def dot(a, b):
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(a @ b)


def outer(a, b):
    """Rank-1 matrix ``a b^T``."""
    return np.outer(as_vector(a, "a"), as_vector(b, "b"))


def matvec_transposed(S, q):
    """Read out ``S^T q``; for a memory state this is the attention output."""
    S = as_matrix(S, "S")
    q = as_vector(q, "q")
    if S.shape[0] != q.shape[0]:
        raise ValueError(f"rows(S)={S.shape[0]} does not match len(q)={q.shape[0]}")
    return S.T @ q


def frobenius_norm(S):
    """Frobenius norm that does not overflow before the entries do."""
    S = np.asarray(S, dtype=np.float64)
    m = np.max(np.abs(S)) if S.size else 0.0
    if m == 0.0 or not np.isfinite(m):
        return float(m)
    R = S / m
    return float(m * np.sqrt(np.sum(R * R)))


def unit_lower_solve(L, B):
    """Solve ``L X = B`` for unit lower-triangular ``L`` by forward substitution.

    Parameters
    ----------
    L : (n, n) array
        Unit diagonal; entries above the diagonal must be exactly zero.
    B : (n,) or (n, m) array

    Returns
    -------
    X : array with the shape of ``B``

    Rows are eliminated strictly in order, so the result depends only on
    the inputs (no pivoting, no blocking).
    """
    L = as_matrix(L, "L")
    B = np.asarray(B, dtype=np.float64)
    n = L.shape[0]
    if L.shape != (n, n):
        raise ValueError(f"L must be square, got {L.shape}")
    if B.shape[0] != n:
        raise ValueError(f"B has {B.shape[0]} rows, L has {n}")
    if not np.all(np.diag(L) == 1.0):
        raise ValueError("L must have a unit diagonal")
    if np.any(np.triu(L, 1) != 0.0):
        raise ValueError("L must be lower triangular")
    return _forward_substitute(L, B)


def _forward_substitute(L, B):
    # No validation; callers guarantee unit lower-triangular L.
    X = np.array(B, dtype=np.float64, copy=True)
    for i in range(1, L.shape[0]):
        X[i] -= L[i, :i] @ X[:i]
    return X
