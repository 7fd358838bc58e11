"""Seeded experiment generators, perturbations, sweeps and CSV output.

Randomness
----------
Every trial draws from its own ``numpy.random.Generator(PCG64)`` seeded by
``numpy.random.SeedSequence([seed, trial_index])`` (see :func:`trial_rng`).
Trials therefore never share a stream, and running them in any order or
concurrently gives the same numbers.
"""
import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .integrators import (RK2, RK4, RKN, DeltaEuler, ExactEFLA, VanillaLinear,
                          parse_method, series_phi, step)
from .rank1 import StepInput, decay_gate
from .scan import SequenceBatch, recurrent_forward

__all__ = [
    "KEY_SCHEMES",
    "RECALL_COLUMNS",
    "STABILITY_COLUMNS",
    "CONVERGENCE_COLUMNS",
    "trial_seed",
    "trial_rng",
    "RecallTask",
    "Perturbation",
    "Dropout",
    "Scale",
    "Gaussian",
    "NoPerturbation",
    "make_perturbation",
    "TrialReport",
    "gen_recall",
    "perturb",
    "eval_recall",
    "stability_sweep",
    "rk_convergence",
    "emit_csv",
    "format_float",
]

KEY_SCHEMES = ("orthonormal", "random-gaussian-normalized", "random-gaussian-raw")

RECALL_COLUMNS = ("seed", "method", "scheme", "perturbation", "param", "mse",
                  "cosine", "max_state_norm", "divergence_index")
STABILITY_COLUMNS = ("x", "method", "measured_factor", "predicted_factor", "abs_error")
CONVERGENCE_COLUMNS = ("order", "beta", "lam", "x", "error", "bound", "bound_ratio")


def trial_seed(seed, index):
    """64-bit seed for trial ``index`` of a run seeded with ``seed``."""
    ss = np.random.SeedSequence([int(seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def trial_rng(seed, index=0):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(index)])))


# -- recall tasks ------------------------------------------------------------

@dataclass
class RecallTask:
    """Store ``n_pairs`` (k, v) pairs, then read each one back.

    The store phase writes with ``q = 0``; the query phase presents each
    stored key as a query with ``k = 0`` so reading never changes memory.
    ``store_length`` marks where the query phase starts.
    """

    n_pairs: int
    d_k: int
    d_v: int
    key_scheme: str
    batch: SequenceBatch
    targets: np.ndarray
    store_length: int
    repeats: int = 1

    @property
    def query_slice(self):
        return slice(self.store_length, self.store_length + self.n_pairs)


def _keys(rng, n_pairs, d_k, scheme):
    if scheme == "orthonormal":
        Qm, R = np.linalg.qr(rng.standard_normal((d_k, n_pairs)))
        # fix the sign so the basis is a deterministic function of the draw
        return (Qm * np.sign(np.diag(R))).T
    G = rng.standard_normal((n_pairs, d_k))
    if scheme == "random-gaussian-normalized":
        return G / np.linalg.norm(G, axis=1, keepdims=True)
    if scheme == "random-gaussian-raw":
        return G / math.sqrt(d_k)
    raise ValueError(f"unknown key scheme {scheme!r}; expected one of {KEY_SCHEMES}")


def gen_recall(seed, n_pairs, d_k, d_v, key_scheme="orthonormal", repeats=1, beta=1.0):
    """Build an associative-recall task.

    ``repeats > 1`` cycles the store phase that many times, which is how the
    repeated-key stress tests are built. Raw Gaussian keys have entries of
    variance ``1/d_k`` (so ``E|k|^2 = 1``); values are standard normal.
    """
    if n_pairs < 1 or d_k < 1 or d_v < 1 or repeats < 1:
        raise ValueError("n_pairs, d_k, d_v and repeats must be >= 1")
    if key_scheme == "orthonormal" and n_pairs > d_k:
        raise ValueError(f"orthonormal keys need n_pairs <= d_k, got {n_pairs} > {d_k}")
    rng = trial_rng(seed)
    keys = _keys(rng, n_pairs, d_k, key_scheme)
    values = rng.standard_normal((n_pairs, d_v))

    n_store = n_pairs * repeats
    L = n_store + n_pairs
    Q = np.zeros((L, d_k))
    K = np.zeros((L, d_k))
    V = np.zeros((L, d_v))
    beta_arr = np.zeros(L)
    K[:n_store] = np.tile(keys, (repeats, 1))
    V[:n_store] = np.tile(values, (repeats, 1))
    beta_arr[:n_store] = beta
    Q[n_store:] = keys
    batch = SequenceBatch(Q, K, V, beta_arr)
    return RecallTask(n_pairs=n_pairs, d_k=d_k, d_v=d_v, key_scheme=key_scheme,
                      batch=batch, targets=values.copy(), store_length=n_store,
                      repeats=repeats)


# -- perturbations -----------------------------------------------------------

class Perturbation:
    kind = "none"
    param = 0.0

    def __str__(self):
        return f"{self.kind}({self.param:g})"


@dataclass(frozen=True)
class NoPerturbation(Perturbation):
    kind = "none"
    param = 0.0


@dataclass(frozen=True)
class Dropout(Perturbation):
    """Zero each store-phase token's key and value with probability ``p``."""

    p: float
    kind = "dropout"

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"dropout p must lie in [0, 1], got {self.p}")

    @property
    def param(self):
        return self.p


@dataclass(frozen=True)
class Scale(Perturbation):
    """Multiply every key by ``s`` (so ``lam`` scales by ``s**2``).

    ``scale_values`` also scales the store-phase values; off by default.
    """

    s: float
    scale_values: bool = False
    kind = "scale"

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"scale s must be > 0, got {self.s}")

    @property
    def param(self):
        return self.s


@dataclass(frozen=True)
class Gaussian(Perturbation):
    """Add i.i.d. N(0, sigma^2) noise to store-phase keys and values."""

    sigma: float
    kind = "gaussian"

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")

    @property
    def param(self):
        return self.sigma


def make_perturbation(kind, param=0.0, scale_values=False):
    kind = str(kind).lower()
    if kind == "none":
        return NoPerturbation()
    if kind == "dropout":
        return Dropout(float(param))
    if kind == "scale":
        return Scale(float(param), scale_values=scale_values)
    if kind in ("gaussian", "noise"):
        return Gaussian(float(param))
    raise ValueError(f"unknown perturbation {kind!r}")


def _store_mask(batch, store_length):
    mask = np.zeros(batch.length, dtype=bool)
    mask[:batch.length if store_length is None else store_length] = True
    return mask


def perturb(batch, p, seed, store_length=None):
    """Apply perturbation ``p`` to ``batch``.

    ``store_length`` limits dropout and noise to the first tokens (the write
    phase of a recall task); by default the whole sequence is eligible.
    Scaling always applies to every key; query-phase keys are zero anyway.
    """
    rng = trial_rng(seed, 1)
    store = _store_mask(batch, store_length)
    if isinstance(p, NoPerturbation):
        return batch
    if isinstance(p, Dropout):
        if p.p == 0.0:
            return batch
        drop = (rng.random(batch.length) < p.p) & store
        K = batch.K.copy()
        V = batch.V.copy()
        K[drop] = 0.0
        V[drop] = 0.0
        return batch.with_(K=K, V=V)
    if isinstance(p, Scale):
        V = batch.V
        if p.scale_values:
            V = V.copy()
            V[store] *= p.s
        return batch.with_(K=batch.K * p.s, V=V)
    if isinstance(p, Gaussian):
        if p.sigma == 0.0:
            return batch
        K = batch.K.copy()
        V = batch.V.copy()
        K[store] += p.sigma * rng.standard_normal(K[store].shape)
        V[store] += p.sigma * rng.standard_normal(V[store].shape)
        return batch.with_(K=K, V=V)
    raise TypeError(f"not a Perturbation: {p!r}")


# -- evaluation --------------------------------------------------------------

@dataclass
class TrialReport:
    method: str
    scheme: str
    perturbation: str
    param: float
    mse: float
    cosine: float
    max_state_norm: float
    divergence_index: Optional[int]
    seed: int

    def row(self):
        return {
            "seed": self.seed,
            "method": self.method,
            "scheme": self.scheme,
            "perturbation": self.perturbation,
            "param": self.param,
            "mse": self.mse,
            "cosine": self.cosine,
            "max_state_norm": self.max_state_norm,
            "divergence_index": "" if self.divergence_index is None else self.divergence_index,
        }


def _mean_cosine(O, T):
    # rescale rows first so huge (but finite) outputs do not overflow
    O = O / np.maximum(np.abs(O).max(axis=1, keepdims=True), np.finfo(float).tiny)
    T = T / np.maximum(np.abs(T).max(axis=1, keepdims=True), np.finfo(float).tiny)
    num = np.einsum("ij,ij->i", O, T)
    den = np.linalg.norm(O, axis=1) * np.linalg.norm(T, axis=1)
    cos = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return float(np.clip(cos, -1.0, 1.0).mean())


def eval_recall(method, task, perturbation=None, seed=0):
    """Perturb, scan, and score one recall trial.

    Divergence is data: a blown-up state yields ``nan`` MSE/cosine, an
    infinite ``max_state_norm`` and the index of the first bad token.
    """
    method = parse_method(method)
    if perturbation is None:
        perturbation = NoPerturbation()
    batch = perturb(task.batch, perturbation, seed, store_length=task.store_length)
    result = recurrent_forward(method, batch)
    O = result.O[task.query_slice]
    if np.all(np.isfinite(O)):
        with np.errstate(over="ignore"):
            mse = float(np.mean((O - task.targets) ** 2))
        cosine = _mean_cosine(O, task.targets)
    else:
        mse = math.nan
        cosine = math.nan
    trace = result.state_norm_trace
    max_norm = math.inf if result.diverged else float(trace.max())
    return TrialReport(method=str(method), scheme=task.key_scheme,
                       perturbation=perturbation.kind, param=float(perturbation.param),
                       mse=mse, cosine=cosine, max_state_norm=max_norm,
                       divergence_index=result.divergence_index, seed=int(seed))


# -- sweeps ------------------------------------------------------------------

def predicted_factor(method, x):
    """Analytic per-step growth of the key-aligned component at ``x = beta*lam``."""
    if isinstance(method, VanillaLinear):
        return 1.0
    if isinstance(method, DeltaEuler):
        return abs(1.0 - x)
    if isinstance(method, RK2):
        return abs(1.0 - x + x * x / 2.0)
    if isinstance(method, RK4):
        return abs(series_phi(4, x)[0])
    if isinstance(method, RKN):
        return abs(series_phi(method.order, x)[0])
    if isinstance(method, ExactEFLA):
        return math.exp(-x)
    raise ValueError(f"no growth factor for {method}")


_GROWTH_WINDOW = 1e-3


def _measure_growth(method, x, steps, d=4, d_v=3):
    # Homogeneous run (v = 0, beta = 1, lam = x) from a state lying along the
    # key. Ratios are averaged geometrically only while the component is
    # within _GROWTH_WINDOW of its starting size (or growing); below that,
    # rounding left in the orthogonal complement would dominate.
    khat = np.eye(d)[0]
    inp = StepInput(math.sqrt(x) * khat, np.zeros(d_v), 1.0)
    S = np.outer(khat, np.arange(1.0, d_v + 1.0))
    start = prev = np.linalg.norm(khat @ S)
    logs = []
    ratios = []
    for _ in range(steps):
        S = step(method, S, inp)
        cur = np.linalg.norm(khat @ S)
        ratio = cur / prev
        ratios.append(ratio)
        if ratio == 0.0:
            break
        logs.append(math.log(ratio))
        if cur < _GROWTH_WINDOW * start or cur > 1e250:
            break
        prev = cur
    if not logs:
        return 0.0, ratios
    return math.exp(sum(logs) / len(logs)), ratios


def stability_sweep(x_values, steps=50, methods=("euler", "rk2", "rk4", "efla")):
    """Growth factor along the key per method, measured vs predicted.

    Returns a list of dict rows with :data:`STABILITY_COLUMNS`.
    """
    rows = []
    for x in x_values:
        for name in methods:
            m = parse_method(name)
            measured, _ = _measure_growth(m, float(x), steps)
            pred = predicted_factor(m, float(x))
            rows.append({"x": float(x), "method": str(m), "measured_factor": measured,
                         "predicted_factor": pred, "abs_error": abs(measured - pred)})
    return rows


def rk_convergence(orders, beta, lam):
    """One-step coefficient error of RK-N against the exact gate.

    ``error = |beta*phi1_N(x) - alpha|`` and ``bound = e^x x^N beta / (N+1)!``.
    """
    beta = float(beta)
    lam = float(lam)
    x = beta * lam
    alpha = decay_gate(beta, lam).alpha
    rows = []
    for N in orders:
        err = abs(beta * series_phi(int(N), x)[1] - alpha)
        bound = math.exp(x) * x ** int(N) * beta / math.factorial(int(N) + 1)
        ratio = err / bound if bound > 0 else 0.0
        rows.append({"order": int(N), "beta": beta, "lam": lam, "x": x,
                     "error": err, "bound": bound, "bound_ratio": ratio})
    return rows


# -- CSV ---------------------------------------------------------------------

def format_float(x):
    """17 significant digits; round-trips every float64 exactly."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def emit_csv(records, path, columns=None):
    """Write ``records`` (TrialReports or dict rows) as CSV.

    Columns default to :data:`RECALL_COLUMNS` for reports, otherwise the keys
    of the first row. An empty record list needs ``columns`` for its header.
    """
    records = list(records)
    rows = [r.row() if isinstance(r, TrialReport) else dict(r) for r in records]
    if columns is None:
        if records and isinstance(records[0], TrialReport):
            columns = RECALL_COLUMNS
        elif rows:
            columns = tuple(rows[0])
        else:
            columns = RECALL_COLUMNS
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_float(row[c]) for c in columns])
