"""Property suites run by ``efla verify``.

Each suite draws its own seeded instances, measures a worst-case error and
compares it against a tolerance (overridable in one go with ``tolerance=``).
Suites that check a purely boolean property report an error of 0 or 1.
"""
from dataclasses import asdict, dataclass
import math
import time

import numpy as np

from .chunkwise import ChunkPlan, chunk_forward, decay_product, ut_transform, wy_sequential
from .harness import (Gaussian, Scale, eval_recall, gen_recall, rk_convergence,
                      stability_sweep, trial_rng)
from .integrators import (RK2, RK4, RKN, DeltaEuler, ExactEFLA, VanillaLinear,
                          coefficients, explicit_operators, reference_step, step)
from .numerics import outer, unit_lower_solve
from .rank1 import (SERIES_THRESHOLD, StepInput, apply_transition, decay_gate,
                    gate_fn, transition_matrix)
from .scan import SequenceBatch, recurrent_forward

__all__ = ["SuiteResult", "SUITES", "run_suites", "random_batch"]

ODE_METHODS = (DeltaEuler(), RK2(), RK4(), RKN(6), ExactEFLA())


@dataclass
class SuiteResult:
    name: str
    passed: bool
    max_error: float
    tolerance: float
    seconds: float = 0.0
    detail: str = ""

    def as_dict(self):
        return asdict(self)


def random_batch(rng, L, d_k, d_v, key_norm=(0.0, 1.0), beta=(0.0, 1.0)):
    """Random batch whose key norms and step sizes are uniform on the given ranges."""
    K = rng.standard_normal((L, d_k))
    K /= np.linalg.norm(K, axis=1, keepdims=True)
    K *= rng.uniform(*key_norm, size=L)[:, None]
    return SequenceBatch(rng.standard_normal((L, d_k)), K,
                         rng.standard_normal((L, d_v)), rng.uniform(*beta, size=L))


def _unit(rng, d):
    x = rng.standard_normal(d)
    return x / np.linalg.norm(x)


# -- numerics ----------------------------------------------------------------

def suite_outer_rank1(tol, seed):
    rng = trial_rng(seed, 101)
    worst = 0.0
    for _ in range(50):
        M = outer(rng.standard_normal(6), rng.standard_normal(5))
        minors = M[:, None, :, None] * M[None, :, None, :] - M[:, None, None, :] * M[None, :, :, None]
        worst = max(worst, float(np.abs(minors).max()))
    return worst, "max |2x2 minor| of outer(a, b)"


def suite_unit_lower_solve(tol, seed):
    rng = trial_rng(seed, 102)
    worst = 0.0
    for n in (1, 2, 8, 16, 32, 64):
        L = np.tril(rng.uniform(-1, 1, (n, n)) / math.sqrt(n), -1) + np.eye(n)
        B = rng.standard_normal((n, 3))
        X = unit_lower_solve(L, B)
        worst = max(worst, float(np.abs(L @ X - B).max()))
    return worst, "max residual |L X - B| for n up to 64"


# -- rank-1 dynamics ---------------------------------------------------------

def suite_gate_bounds(tol, seed):
    grid = np.logspace(-3, 1, 20)
    violations = 0
    for beta in grid:
        for lam in grid:
            a = decay_gate(beta, lam).alpha
            violations += not (0.0 < a < beta)
        if decay_gate(beta, 0.0).alpha != beta:
            violations += 1
        # alpha increases towards beta as lam shrinks
        alphas = [decay_gate(beta, lam).alpha for lam in grid[::-1]]
        violations += int(np.any(np.diff(alphas) < 0))
    return float(violations), "count of 0 < alpha < beta / alpha(beta, 0) = beta / monotone violations"


def suite_gate_continuity(tol, seed):
    worst = 0.0
    for eps in (1e-3, 1e-6, 1e-9):
        lo = gate_fn(SERIES_THRESHOLD * (1 - eps))
        hi = gate_fn(SERIES_THRESHOLD * (1 + eps))
        # the function itself moves by ~tau*eps/2 across the window
        worst = max(worst, abs(hi - lo) - SERIES_THRESHOLD * eps)
    return max(worst, 0.0), "jump of g(x) across the series/expm1 switch"


def suite_directional_decay(tol, seed):
    rng = trial_rng(seed, 103)
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(2, 17))
        k = rng.standard_normal(d) * rng.uniform(0.1, 2.0)
        beta = rng.uniform(0.0, 3.0)
        S = rng.standard_normal((d, 5))
        gate = decay_gate(beta, k @ k)
        out = apply_transition(k, gate.alpha, S)
        ref = np.linalg.norm(k @ S)
        rel = abs(np.linalg.norm(k @ out) - math.exp(-beta * (k @ k)) * ref) / ref
        w = rng.standard_normal(d)
        w -= (w @ k) / (k @ k) * k
        worst = max(worst, rel, float(np.abs(w @ out - w @ S).max()))
    return worst, "relative key-aligned decay error / orthogonal drift"


def suite_transition_equivalence(tol, seed):
    rng = trial_rng(seed, 104)
    worst = 0.0
    for _ in range(50):
        d = int(rng.integers(1, 33))
        k = rng.standard_normal(d)
        alpha = rng.uniform(0, 1) / max(k @ k, 1e-12)
        S = rng.standard_normal((d, 4))
        worst = max(worst, float(np.abs(apply_transition(k, alpha, S) - transition_matrix(k, alpha) @ S).max()))
    return worst, "apply_transition vs explicit matrix product"


# -- integrators -------------------------------------------------------------

def suite_coefficient_collapse(tol, seed):
    rng = trial_rng(seed, 105)
    worst = 0.0
    d, dv = 8, 5
    for method in (DeltaEuler(), RK2(), RK4(), RKN(6), ExactEFLA()):
        for beta in (0.1, 1.0, 3.0):
            for lam in (0.0, 0.5, 1.0, 4.0):
                k = _unit(rng, d) * math.sqrt(lam)
                inp = StepInput(k, rng.standard_normal(dv), beta)
                S = rng.standard_normal((d, dv))
                Tm, F = explicit_operators(method, inp, d)
                fast = step(method, S, inp)
                slow = Tm @ S + F
                worst = max(worst, float(np.abs(fast - slow).max() / max(1.0, np.abs(slow).max())))
    return worst, "scalar step vs dense operator series (relative to max(1, |S'|))"


def suite_order_convergence(tol, seed):
    rows = rk_convergence(range(1, 16), 1.0, 1.0)
    errs = [r["error"] for r in rows]
    bad = sum(b >= a for a, b in zip(errs, errs[1:]))
    bad += sum(r["error"] > r["bound"] for r in rows)
    return float(bad), "non-decreasing steps / factorial-bound violations, N = 1..15, x = 1"


def suite_stability_dichotomy(tol, seed):
    rows = stability_sweep([3.0], steps=40)
    expected = {"euler": 2.0, "rk2": 2.5, "rk4": 1.375, "efla": math.exp(-3.0)}
    worst = max(abs(r["measured_factor"] - expected[r["method"]]) for r in rows)
    return worst, "measured growth along k at beta*lam = 3"


def suite_fixed_point(tol, seed):
    rng = trial_rng(seed, 106)
    worst = 0.0
    for _ in range(30):
        d, dv = 6, 4
        k = _unit(rng, d) * math.sqrt(rng.uniform(0.25, 2.0))
        v = rng.standard_normal(dv)
        # S with S^T k = v: the minimum-norm solution plus an orthogonal part
        S = np.outer(k, v) / (k @ k)
        w = rng.standard_normal(d)
        w -= (w @ k) / (k @ k) * k
        S = S + np.outer(w, rng.standard_normal(dv))
        # beta*lam <= 2: stiffer steps amplify the rounding residual of S^T k - v
        inp = StepInput(k, v, rng.uniform(0, 2) / (k @ k))
        for m in ODE_METHODS:
            worst = max(worst, float(np.abs(step(m, S, inp) - S).max()))
    return worst, "drift of S with S^T k = v under one step"


def suite_delta_rule_recovery(tol, seed):
    rng = trial_rng(seed, 107)
    worst = 0.0
    for _ in range(50):
        d, dv = 8, 4
        k = _unit(rng, d) * math.sqrt(10 ** rng.uniform(-16, -8))
        S = rng.standard_normal((d, dv)) * 10
        inp = StepInput(k, rng.standard_normal(dv), rng.uniform(0, 2))
        diff = np.abs(step(ExactEFLA(), S, inp) - step(DeltaEuler(), S, inp)).max()
        worst = max(worst, float(diff / (1 + np.abs(S).max())))
    return worst, "EFLA vs Euler for lam <= 1e-8, scaled by 1 + |S|"


def suite_reference_oracle(tol, seed):
    rng = trial_rng(seed, 108)
    worst = 0.0
    for _ in range(20):
        d = 16
        k = _unit(rng, d) * math.sqrt(rng.uniform(0.05, 2.0))
        beta = rng.uniform(0, 5) / (k @ k)
        beta = min(beta, 10.0)
        inp = StepInput(k, rng.standard_normal(d), beta)
        S = rng.standard_normal((d, d))
        worst = max(worst, float(np.abs(step(ExactEFLA(), S, inp) - reference_step(S, inp, 100_000)).max()))
    return worst, "EFLA vs 1e5-substep RK-4 oracle"


# -- scans -------------------------------------------------------------------

def suite_causality(tol, seed):
    rng = trial_rng(seed, 109)
    batch = random_batch(rng, 40, 6, 5)
    bad = 0
    for m in ODE_METHODS + (VanillaLinear(),):
        full = recurrent_forward(m, batch).O
        for t in (1, 7, 23):
            bad += not np.array_equal(recurrent_forward(m, batch.slice(0, t)).O, full[:t])
    return float(bad), "prefix outputs that are not bitwise equal"


def suite_zero_key_transparency(tol, seed):
    rng = trial_rng(seed, 110)
    batch = random_batch(rng, 20, 6, 5)
    bad = 0
    for m in ODE_METHODS + (VanillaLinear(),):
        S = recurrent_forward(m, batch).S_final
        q = rng.standard_normal(6)
        tail = SequenceBatch(q[None], np.zeros((1, 6)), rng.standard_normal((1, 5)), [rng.uniform(0, 2)])
        r = recurrent_forward(m, tail, S0=S)
        bad += not (np.array_equal(r.S_final, S) and np.array_equal(r.O[0], S.T @ q))
    return float(bad), "zero-key tokens that changed state or readout"


def suite_efla_boundedness(tol, seed):
    rng = trial_rng(seed, 111)
    batch = random_batch(rng, 300, 8, 6, key_norm=(0.0, 4.0), beta=(0.0, 2.0))
    r = recurrent_forward(ExactEFLA(), batch)
    lam = np.einsum("ij,ij->i", batch.K, batch.K)
    alphas = np.array([decay_gate(b, l).alpha for b, l in zip(batch.beta, lam)])
    bound = np.cumsum(alphas * np.sqrt(lam) * np.linalg.norm(batch.V, axis=1))
    excess = float(np.max(r.state_norm_trace - bound * (1 + 1e-12)))
    return float(max(excess, 0.0) > 0), "state norm above sum alpha |k| |v|"


def suite_chunk_equivalence(tol, seed):
    rng = trial_rng(seed, 112)
    batch = random_batch(rng, 256, 32, 32)
    worst = 0.0
    for m in ODE_METHODS:
        rec = recurrent_forward(m, batch)
        for C in (1, 2, 7, 16, 64):
            ch = chunk_forward(m, batch, ChunkPlan(C))
            worst = max(worst, float(np.abs(ch.O - rec.O).max()),
                        float(np.abs(ch.S_final - rec.S_final).max()))
    return worst, "chunkwise vs recurrent, |k| <= 1, beta <= 1"


def suite_chunk_equivalence_wide(tol, seed):
    # |k| up to 3 and beta up to 2: explicit methods blow up, so scale by the output size
    rng = trial_rng(seed, 113)
    batch = random_batch(rng, 256, 32, 32, key_norm=(0.0, 3.0), beta=(0.0, 2.0))
    worst = 0.0
    for m in ODE_METHODS:
        rec = recurrent_forward(m, batch)
        scale_o = max(1.0, float(np.abs(rec.O).max()))
        scale_s = max(1.0, float(np.abs(rec.S_final).max()))
        for C in (1, 2, 7, 16, 64):
            ch = chunk_forward(m, batch, ChunkPlan(C))
            worst = max(worst, float(np.abs(ch.O - rec.O).max()) / scale_o,
                        float(np.abs(ch.S_final - rec.S_final).max()) / scale_s)
    return worst, "chunkwise vs recurrent, |k| <= 3, beta <= 2, relative to max(1, |O|)"


def suite_wy_identity(tol, seed):
    rng = trial_rng(seed, 114)
    worst = 0.0
    for _ in range(20):
        batch = random_batch(rng, 8, 8, 5, key_norm=(0.0, 2.0), beta=(0.0, 2.0))
        inputs = [batch.token(t) for t in range(8)]
        for m in (DeltaEuler(), ExactEFLA()):
            a = np.array([coefficients(m, i.beta, i.lam).c_transition for i in inputs])
            f = ut_transform(batch.K, batch.V, a)
            P = np.eye(8) - batch.K.T @ f.W
            worst = max(worst, float(np.abs(decay_product(inputs, m) - P).max()))
    return worst, "dense transition product vs I - K^T W"


def suite_h_identity(tol, seed):
    rng = trial_rng(seed, 115)
    worst = 0.0
    for _ in range(20):
        batch = random_batch(rng, 16, 8, 5)
        lam = np.einsum("ij,ij->i", batch.K, batch.K)
        a = np.array([decay_gate(b, l).alpha for b, l in zip(batch.beta, lam)])
        H = batch.K.T @ ut_transform(batch.K, batch.V, a).U
        worst = max(worst, float(np.abs(H - recurrent_forward(ExactEFLA(), batch).S_final).max()))
    return worst, "K^T U vs zero-initial-state recurrent result"


def suite_ut_vs_sequential(tol, seed):
    rng = trial_rng(seed, 116)
    worst = 0.0
    for _ in range(100):
        batch = random_batch(rng, 16, 16, 8, key_norm=(0.0, 1.5), beta=(0.0, 1.0))
        lam = np.einsum("ij,ij->i", batch.K, batch.K)
        a = np.array([decay_gate(b, l).alpha for b, l in zip(batch.beta, lam)])
        f = ut_transform(batch.K, batch.V, a)
        W, U = wy_sequential(batch.K, batch.V, a)
        worst = max(worst, float(np.abs(f.W - W).max()), float(np.abs(f.U - U).max()))
    return worst, "UT transform rows vs sequential WY recurrences, C = 16"


def suite_chunk_size_invariance(tol, seed):
    rng = trial_rng(seed, 117)
    batch = random_batch(rng, 200, 16, 8)
    worst = 0.0
    for m in (DeltaEuler(), ExactEFLA()):
        base = chunk_forward(m, batch, ChunkPlan(1)).O
        for C in (3, 32, 200):
            worst = max(worst, float(np.abs(chunk_forward(m, batch, ChunkPlan(C)).O - base).max()))
    return worst, "outputs across chunk sizes"


# -- harness -----------------------------------------------------------------

def suite_recall_sanity(tol, seed):
    worst = 0.0
    for i in range(3):
        task = gen_recall(seed + i, 8, 8, 6, "orthonormal")
        for m in ODE_METHODS:
            worst = max(worst, 1.0 - eval_recall(m, task, None, seed).cosine)
    return worst, "1 - mean cosine on orthonormal tasks"


def suite_scale_monotonicity(tol, seed):
    task = gen_recall(seed, 4, 8, 6, "orthonormal", repeats=1000)
    bad = 0
    euler = [eval_recall(DeltaEuler(), task, Scale(s), seed) for s in (1, 2, 4, 8)]
    efla = [eval_recall(ExactEFLA(), task, Scale(s), seed) for s in (1, 2, 4, 8)]
    norms = [r.max_state_norm for r in euler]
    bad += int(any(b < a for a, b in zip(norms, norms[1:])))
    bad += sum(r.divergence_index is None for r in euler[1:])
    bad += sum(r.divergence_index is not None or r.cosine < 0.99 for r in efla)
    # the EFLA fixed point along a key scaled by s has |S| ~ |v|/s, so |v| bounds it
    vmax = float(np.linalg.norm(task.targets, axis=1).max()) * math.sqrt(task.n_pairs)
    bad += sum(r.max_state_norm > vmax * (1 + 1e-9) for r in efla)
    return float(bad), "Euler norm monotone & diverges for s >= 2; EFLA bounded with cosine >= 0.99"


def suite_determinism(tol, seed):
    task_a = gen_recall(seed, 6, 8, 4, "random-gaussian-normalized")
    task_b = gen_recall(seed, 6, 8, 4, "random-gaussian-normalized")
    a = eval_recall(ExactEFLA(), task_a, Gaussian(0.1), seed)
    b = eval_recall(ExactEFLA(), task_b, Gaussian(0.1), seed)
    return float(a != b), "repeat trial with the same seed"


def suite_stability_sweep_table(tol, seed):
    rows = stability_sweep([0.5, 1.0, 1.5, 2.0, 3.0, 5.0], steps=40)
    return max(r["abs_error"] for r in rows), "measured vs predicted growth factors"


#: name -> (function, default tolerance)
SUITES = {
    "outer_rank1": (suite_outer_rank1, 1e-12),
    "unit_lower_solve": (suite_unit_lower_solve, 1e-10),
    "gate_bounds": (suite_gate_bounds, 0.5),
    "gate_continuity": (suite_gate_continuity, 1e-12),
    "directional_decay": (suite_directional_decay, 1e-10),
    "transition_equivalence": (suite_transition_equivalence, 1e-12),
    "coefficient_collapse": (suite_coefficient_collapse, 1e-10),
    "order_convergence": (suite_order_convergence, 0.5),
    "stability_dichotomy": (suite_stability_dichotomy, 1e-12),
    "stability_sweep": (suite_stability_sweep_table, 1e-12),
    "fixed_point": (suite_fixed_point, 1e-13),
    "delta_rule_recovery": (suite_delta_rule_recovery, 1e-12),
    "reference_oracle": (suite_reference_oracle, 1e-8),
    "causality": (suite_causality, 0.5),
    "zero_key_transparency": (suite_zero_key_transparency, 0.5),
    "efla_boundedness": (suite_efla_boundedness, 0.5),
    "chunk_equivalence": (suite_chunk_equivalence, 1e-9),
    "chunk_equivalence_wide": (suite_chunk_equivalence_wide, 1e-9),
    "wy_identity": (suite_wy_identity, 1e-10),
    "h_identity": (suite_h_identity, 1e-10),
    "ut_vs_sequential": (suite_ut_vs_sequential, 1e-10),
    "chunk_size_invariance": (suite_chunk_size_invariance, 1e-9),
    "recall_sanity": (suite_recall_sanity, 1e-12),
    "scale_monotonicity": (suite_scale_monotonicity, 0.5),
    "determinism": (suite_determinism, 0.5),
}


def run_suites(names=None, tolerance=None, seed=0):
    """Run the named suites (all by default); ``tolerance`` replaces every default."""
    names = list(SUITES) if names is None else list(names)
    results = []
    for name in names:
        fn, default_tol = SUITES[name]
        tol = default_tol if tolerance is None else float(tolerance)
        t0 = time.perf_counter()
        err, detail = fn(tol, seed)
        dt = time.perf_counter() - t0
        results.append(SuiteResult(name=name, passed=bool(err <= tol), max_error=float(err),
                                   tolerance=tol, seconds=dt, detail=detail))
    return results
