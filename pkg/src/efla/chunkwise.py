"""Chunkwise-parallel form of the rank-1 recurrence.

Inside a chunk of ``C`` tokens the product of per-token transitions and the
accumulated writes have WY representations

    P = I - sum_i k_i w_i^T,        H = sum_i k_i u_i^T,

whose rows ``W``, ``U`` come out of one unit lower-triangular solve
(the UT transform). Given the chunk's initial state ``S``::

    O      = Q S + (Q K^T * M) (U - W S)       M = tril(ones), diagonal kept
    S_next = S + K^T (U - W S)

Any method whose step is ``S' = S - a k k^T S + b k v^T`` fits: ``a`` drives
``W`` and the transition part of ``U``; ``b`` only scales the values.
"""
from dataclasses import dataclass

import numpy as np

from .integrators import Method, Reference, VanillaLinear, coefficients
from .numerics import _forward_substitute, frobenius_norm
from .scan import ScanResult, _initial_state

__all__ = [
    "ChunkPlan",
    "ChunkFactors",
    "wy_sequential",
    "ut_transform",
    "chunk_forward",
    "decay_product",
    "method_rates",
]


@dataclass(frozen=True)
class ChunkPlan:
    """Chunk size; a shorter trailing chunk is processed as-is (no padding)."""

    chunk_size: int = 64

    def __post_init__(self):
        if int(self.chunk_size) != self.chunk_size or self.chunk_size < 1:
            raise ValueError(f"chunk_size must be an integer >= 1, got {self.chunk_size}")

    def bounds(self, L):
        C = int(self.chunk_size)
        return [(s, min(s + C, L)) for s in range(0, L, C)]


@dataclass
class ChunkFactors:
    T: np.ndarray
    W: np.ndarray
    U: np.ndarray
    alphas: np.ndarray


def _input_rates(alphas, input_rates):
    if input_rates is None:
        return alphas
    return np.asarray(input_rates, dtype=np.float64)


def wy_sequential(K, V, alphas, input_rates=None):
    """Row-by-row WY recurrences (reference for :func:`ut_transform`).

    ``w_r = a_r (k_r - sum_{i<r} (k_r.k_i) w_i)`` and
    ``u_r = b_r v_r - a_r sum_{i<r} (k_r.k_i) u_i`` with ``b = a`` unless
    ``input_rates`` is given.
    """
    K = np.asarray(K, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    a = np.asarray(alphas, dtype=np.float64)
    b = _input_rates(a, input_rates)
    W = np.zeros_like(K)
    U = np.zeros_like(V)
    for r in range(K.shape[0]):
        w = K[r].copy()
        acc_u = np.zeros(V.shape[1])
        for i in range(r):
            g = K[r] @ K[i]
            w -= g * W[i]
            acc_u += g * U[i]
        W[r] = a[r] * w
        U[r] = b[r] * V[r] - a[r] * acc_u
    return W, U


def ut_transform(K, V, alphas, input_rates=None):
    """Solve for all ``w``/``u`` rows of a chunk at once.

    ``T = (I + StrictTril(diag(a) K K^T))^-1 diag(a)`` via forward
    substitution, ``W = T K`` and ``U = (I + ...)^-1 diag(b) V``.
    """
    K = np.asarray(K, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    a = np.asarray(alphas, dtype=np.float64)
    b = _input_rates(a, input_rates)
    C = K.shape[0]
    system = np.eye(C) + np.tril(a[:, None] * (K @ K.T), -1)
    T = _forward_substitute(system, np.diag(a))
    W = T @ K
    if input_rates is None:
        U = T @ V
    else:
        U = _forward_substitute(system, b[:, None] * V)
    return ChunkFactors(T=T, W=W, U=U, alphas=a)


def method_rates(method, beta, lam):
    """Per-token ``(transition, input)`` coefficient arrays for ``method``."""
    if isinstance(method, Reference):
        raise ValueError("the reference solver has no chunkwise form")
    if not isinstance(method, Method):
        raise TypeError(f"not a Method: {method!r}")
    coefs = [coefficients(method, bt, lt) for bt, lt in zip(beta, lam)]
    a = np.array([c.c_transition for c in coefs])
    b = np.array([c.c_input for c in coefs])
    return a, b


def chunk_forward(method, batch, plan=None, S0=None):
    """Chunkwise forward pass; same contract as ``recurrent_forward``."""
    if plan is None:
        plan = ChunkPlan()
    elif not isinstance(plan, ChunkPlan):
        plan = ChunkPlan(int(plan))
    S = _initial_state(batch, S0)
    K, Q, V = batch.K, batch.Q, batch.V
    lam = np.einsum("ij,ij->i", K, K)
    a_all, b_all = method_rates(method, batch.beta, lam)
    separate_input = isinstance(method, VanillaLinear) or not np.array_equal(a_all, b_all)

    L = batch.length
    O = np.empty((L, batch.d_v))
    norms = np.empty(L)
    first_bad = None
    with np.errstate(over="ignore", invalid="ignore"):
        for start, stop in plan.bounds(L):
            Kc, Qc, Vc = K[start:stop], Q[start:stop], V[start:stop]
            f = ut_transform(Kc, Vc, a_all[start:stop],
                             b_all[start:stop] if separate_input else None)
            X = f.U - f.W @ S
            O[start:stop] = Qc @ S + np.tril(Qc @ Kc.T) @ X
            norms[start:stop] = _prefix_state_norms(S, Kc, X)
            S = S + Kc.T @ X
            if first_bad is None:
                bad = ~(np.isfinite(norms[start:stop])
                        & np.all(np.isfinite(O[start:stop]), axis=1))
                if bad.any():
                    first_bad = start + int(np.argmax(bad))
    return ScanResult(O=O, S_final=S, state_norm_trace=norms, divergence_index=first_bad)


def _prefix_state_norms(S0, K, X):
    # ||S0 + K[:r].T @ X[:r]||_F for r = 1..C without forming each state
    base = np.sum(S0 * S0)
    cross = np.cumsum(np.einsum("ij,ij->i", K @ S0, X))
    E = (K @ K.T) * (X @ X.T)
    block = np.diagonal(np.cumsum(np.cumsum(E, axis=0), axis=1))
    sq = base + 2.0 * cross + block
    if np.all(np.isfinite(sq)):
        return np.sqrt(np.maximum(sq, 0.0))
    # squares overflowed: form the intermediate states explicitly
    states = S0 + np.cumsum(K[:, :, None] * X[:, None, :], axis=0)
    return np.array([frobenius_norm(St) for St in states])


def decay_product(inputs, method):
    """Explicit ``prod_t (I - a_t k_t k_t^T)``, later tokens on the left.

    Dense O(d^3) oracle for the WY identity ``P = I - sum_i k_i w_i^T``.
    """
    inputs = list(inputs)
    if not inputs:
        raise ValueError("need at least one input")
    d = inputs[0].k.shape[0]
    P = np.eye(d)
    for inp in inputs:
        a = coefficients(method, inp.beta, inp.lam).c_transition
        P = (np.eye(d) - a * np.outer(inp.k, inp.k)) @ P
    return P
