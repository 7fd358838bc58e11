"""Token-by-token recurrent forward pass."""
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .integrators import Reference, coefficients, reference_step
from .numerics import as_matrix, frobenius_norm
from .rank1 import StepInput

__all__ = ["SequenceBatch", "ScanResult", "recurrent_forward", "normalize_keys"]


@dataclass(frozen=True)
class SequenceBatch:
    """Queries and keys ``(L, d_k)``, values ``(L, d_v)``, step sizes ``(L,)``."""

    Q: np.ndarray
    K: np.ndarray
    V: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        Q = as_matrix(self.Q, "Q")
        K = as_matrix(self.K, "K")
        V = as_matrix(self.V, "V")
        beta = np.ascontiguousarray(self.beta, dtype=np.float64).reshape(-1)
        L = K.shape[0]
        if L < 1:
            raise ValueError("a batch needs at least one token")
        if Q.shape != K.shape:
            raise ValueError(f"Q {Q.shape} and K {K.shape} must have equal shapes")
        if V.shape[0] != L or beta.shape[0] != L:
            raise ValueError(
                f"sequence lengths disagree: K={L}, V={V.shape[0]}, beta={beta.shape[0]}"
            )
        if not np.all(np.isfinite(beta)) or np.any(beta < 0):
            raise ValueError("beta must be finite and non-negative")
        for name, arr in (("Q", Q), ("K", K), ("V", V), ("beta", beta)):
            object.__setattr__(self, name, arr)

    @property
    def length(self):
        return self.K.shape[0]

    @property
    def d_k(self):
        return self.K.shape[1]

    @property
    def d_v(self):
        return self.V.shape[1]

    def __len__(self):
        return self.length

    def token(self, t):
        return StepInput(self.K[t], self.V[t], self.beta[t])

    def slice(self, start, stop):
        return SequenceBatch(self.Q[start:stop], self.K[start:stop],
                             self.V[start:stop], self.beta[start:stop])

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass
class ScanResult:
    O: np.ndarray
    S_final: np.ndarray
    state_norm_trace: np.ndarray
    #: Index (0-based) of the first token whose state is not finite, else None.
    divergence_index: Optional[int] = None

    @property
    def diverged(self):
        return self.divergence_index is not None


def _initial_state(batch, S0):
    if S0 is None:
        return np.zeros((batch.d_k, batch.d_v))
    S0 = as_matrix(S0, "S0")
    if S0.shape != (batch.d_k, batch.d_v):
        raise ValueError(f"S0 shape {S0.shape} != ({batch.d_k}, {batch.d_v})")
    return S0.copy()


def recurrent_forward(method, batch, S0=None):
    """Run the recurrence ``S_t = step(S_{t-1})``, ``o_t = S_t^T q_t``.

    Non-finite states are not an error: the scan keeps going and the first
    offending index is stored in ``divergence_index``.
    """
    S = _initial_state(batch, S0)
    L = batch.length
    O = np.empty((L, batch.d_v))
    norms = np.empty(L)
    first_bad = None
    Q, K, V, beta = batch.Q, batch.K, batch.V, batch.beta
    lam = np.einsum("ij,ij->i", K, K)
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(L):
            k = K[t]
            if isinstance(method, Reference):
                if first_bad is None:
                    S = reference_step(S, batch.token(t), method.substeps)
            else:
                c = coefficients(method, beta[t], lam[t])
                S = S + np.outer(k, c.c_input * V[t] - c.c_transition * (k @ S))
            O[t] = S.T @ Q[t]
            norms[t] = frobenius_norm(S)
            if first_bad is None and not np.isfinite(norms[t]):
                first_bad = t
                if isinstance(method, Reference):
                    S = np.full_like(S, np.nan)
    return ScanResult(O=O, S_final=S, state_norm_trace=norms, divergence_index=first_bad)


def normalize_keys(batch, normalize_queries=False):
    """L2-normalise every key (and optionally every query).

    Exactly-zero vectors are left untouched. Returns ``(batch, n_zero)``
    where ``n_zero`` counts the zero vectors skipped.
    """
    def _unit(X):
        norms = np.sqrt(np.einsum("ij,ij->i", X, X))
        zero = norms == 0.0
        scale = np.where(zero, 1.0, norms)
        return X / scale[:, None], int(zero.sum())

    K, n_zero = _unit(batch.K)
    Q = batch.Q
    if normalize_queries:
        Q, nq = _unit(Q)
        n_zero += nq
    return batch.with_(Q=Q, K=K), n_zero
