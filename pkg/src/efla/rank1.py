"""Rank-1 dynamics ``A = k k^T`` and its closed-form exponential.

For ``A = k k^T`` with ``lam = k.k`` every power collapses, ``A^n = lam^(n-1) A``,
so ``exp(-beta A) = I - alpha A`` with the decay gate

    alpha = (1 - exp(-beta*lam)) / lam        (alpha = beta when lam == 0).

Nothing here forms a d x d matrix except :func:`transition_matrix`, which
exists for inspection and tests.
"""
from dataclasses import dataclass
import math

import numpy as np

from .numerics import as_matrix, as_vector

__all__ = [
    "SERIES_THRESHOLD",
    "StepInput",
    "DecayGate",
    "squared_norm",
    "gate_fn",
    "decay_gate",
    "apply_transition",
    "transition_matrix",
    "rank1_power_coefficient",
]

#: Below this argument ``(1 - e^-x)/x`` is evaluated from its Taylor series.
SERIES_THRESHOLD = 1e-6


@dataclass(frozen=True)
class StepInput:
    """One token: key ``k`` (d_k), value ``v`` (d_v) and step size ``beta >= 0``."""

    k: np.ndarray
    v: np.ndarray
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "k", as_vector(self.k, "k"))
        object.__setattr__(self, "v", as_vector(self.v, "v"))
        beta = float(self.beta)
        if not math.isfinite(beta) or beta < 0:
            raise ValueError(f"beta must be finite and >= 0, got {beta}")
        object.__setattr__(self, "beta", beta)

    @property
    def lam(self):
        return squared_norm(self.k)


@dataclass(frozen=True)
class DecayGate:
    lam: float
    beta: float
    alpha: float

    @property
    def retention(self):
        """Factor ``1 - alpha*lam = exp(-beta*lam)`` applied along the key."""
        return math.exp(-self.beta * self.lam)


def squared_norm(k):
    k = np.asarray(k, dtype=np.float64)
    return float(k @ k)


def gate_fn(x):
    """``g(x) = (1 - e^-x) / x`` for ``x >= 0``, with ``g(0) = 1``.

    Uses ``expm1`` above :data:`SERIES_THRESHOLD` and the cubic Taylor
    polynomial below it; the truncation error there is below ``x^4/120``.
    """
    if x < SERIES_THRESHOLD:
        return 1.0 - x / 2.0 * (1.0 - x / 3.0 * (1.0 - x / 4.0))
    return -math.expm1(-x) / x


def decay_gate(beta, lam):
    beta = float(beta)
    lam = float(lam)
    if not (beta >= 0 and lam >= 0):
        raise ValueError(f"beta and lam must be >= 0, got beta={beta}, lam={lam}")
    if not (math.isfinite(beta) and math.isfinite(lam)):
        raise ValueError("beta and lam must be finite")
    return DecayGate(lam=lam, beta=beta, alpha=beta * gate_fn(beta * lam))


def apply_transition(k, alpha, S):
    """Return ``(I - alpha k k^T) S`` in O(d_k d_v)."""
    k = as_vector(k, "k")
    S = as_matrix(S, "S")
    if S.shape[0] != k.shape[0]:
        raise ValueError(f"rows(S)={S.shape[0]} does not match len(k)={k.shape[0]}")
    return S - alpha * np.outer(k, k @ S)


def transition_matrix(k, alpha):
    """Explicit ``I - alpha k k^T``. For checking :func:`apply_transition` only."""
    k = as_vector(k, "k")
    return np.eye(k.shape[0]) - alpha * np.outer(k, k)


def rank1_power_coefficient(k, n):
    """Scalar ``c`` with ``(k k^T)^n = c * k k^T``, i.e. ``lam^(n-1)``."""
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    return squared_norm(k) ** (int(n) - 1)
