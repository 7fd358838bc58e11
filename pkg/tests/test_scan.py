import numpy as np
import pytest

from efla.integrators import (RK2, RK4, RKN, DeltaEuler, ExactEFLA, Reference,
                              VanillaLinear, coefficients, explicit_operators)
from efla.numerics import matvec_transposed
from efla.scan import SequenceBatch, normalize_keys, recurrent_forward

from conftest import make_batch

METHODS = [VanillaLinear(), DeltaEuler(), RK2(), RK4(), RKN(6), ExactEFLA()]


def test_single_token_recall():
    k = np.array([[0.0, 1.0, 0.0]])
    v = np.array([[2.0, -3.0]])
    res = recurrent_forward(DeltaEuler(), SequenceBatch(k, k, v, [1.0]))
    np.testing.assert_array_equal(res.O[0], v[0])
    assert res.state_norm_trace[0] == pytest.approx(np.linalg.norm(v))
    assert not res.diverged


def test_vanilla_orthogonal_queries_read_nothing(rng):
    L = 10
    K = np.zeros((L, 6))
    K[:, :3] = rng.standard_normal((L, 3))
    Q = np.zeros((L, 6))
    Q[:, 3:] = rng.standard_normal((L, 3))
    res = recurrent_forward(VanillaLinear(), SequenceBatch(Q, K, rng.standard_normal((L, 2)), np.ones(L)))
    np.testing.assert_array_equal(res.O, 0.0)


def test_efla_matches_explicit_operator_replay(rng):
    batch = make_batch(rng, 256, 32, 32, key_norm=(0.0, 2.0), beta=(0.0, 1.5))
    res = recurrent_forward(ExactEFLA(), batch)
    S = np.zeros((32, 32))
    for t in range(batch.length):
        T, F = explicit_operators(ExactEFLA(), batch.token(t), 32)
        S = T @ S + F
        assert np.abs(res.O[t] - matvec_transposed(S, batch.Q[t])).max() <= 1e-12
    assert np.abs(res.S_final - S).max() <= 1e-12


def test_trace_is_frobenius_norm(rng):
    batch = make_batch(rng, 5, 4, 3)
    res = recurrent_forward(RK4(), batch)
    S = np.zeros((4, 3))
    for t in range(5):
        k, v = batch.K[t], batch.V[t]
        c = coefficients(RK4(), batch.beta[t], k @ k)
        S = S - c.c_transition * np.outer(k, k @ S) + c.c_input * np.outer(k, v)
        assert res.state_norm_trace[t] == pytest.approx(np.linalg.norm(S), rel=1e-13)


def test_initial_state_used(rng):
    batch = make_batch(rng, 4, 3, 2)
    S0 = rng.standard_normal((3, 2))
    a = recurrent_forward(ExactEFLA(), batch, S0)
    b = recurrent_forward(ExactEFLA(), batch.slice(0, 2), S0)
    c = recurrent_forward(ExactEFLA(), batch.slice(2, 4), b.S_final)
    np.testing.assert_array_equal(a.O, np.vstack([b.O, c.O]))
    with pytest.raises(ValueError):
        recurrent_forward(ExactEFLA(), batch, np.zeros((2, 3)))


@pytest.mark.parametrize("method", METHODS, ids=str)
def test_causality(rng, method):
    batch = make_batch(rng, 40, 8, 5, key_norm=(0.0, 2.0), beta=(0.0, 2.0))
    full = recurrent_forward(method, batch)
    for t in (1, 7, 23, 39):
        part = recurrent_forward(method, batch.slice(0, t))
        np.testing.assert_array_equal(part.O, full.O[:t])


@pytest.mark.parametrize("method", METHODS, ids=str)
def test_zero_key_transparency(rng, method):
    batch = make_batch(rng, 12, 6, 4)
    pos = 5
    K = np.insert(batch.K, pos, 0.0, axis=0)
    Q = np.insert(batch.Q, pos, rng.standard_normal(6), axis=0)
    V = np.insert(batch.V, pos, rng.standard_normal(4), axis=0)
    beta = np.insert(batch.beta, pos, 0.8)
    ins = recurrent_forward(method, SequenceBatch(Q, K, V, beta))
    base = recurrent_forward(method, batch)
    before = recurrent_forward(method, batch.slice(0, pos))
    np.testing.assert_array_equal(ins.O[pos], before.S_final.T @ Q[pos])
    np.testing.assert_array_equal(ins.O[:pos], base.O[:pos])
    np.testing.assert_array_equal(ins.O[pos + 1:], base.O[pos:])
    np.testing.assert_array_equal(ins.S_final, base.S_final)


def test_efla_norm_bound(rng):
    for _ in range(20):
        batch = make_batch(rng, 64, 8, 4, key_norm=(0.0, 5.0), beta=(0.0, 3.0))
        S0 = rng.standard_normal((8, 4))
        res = recurrent_forward(ExactEFLA(), batch, S0)
        lam = np.einsum("ij,ij->i", batch.K, batch.K)
        alpha = np.array([coefficients(ExactEFLA(), b, l).c_transition
                          for b, l in zip(batch.beta, lam)])
        incr = alpha * np.sqrt(lam) * np.linalg.norm(batch.V, axis=1)
        bound = np.linalg.norm(S0) + np.cumsum(incr)
        assert np.all(res.state_norm_trace <= bound * (1 + 1e-12))


def test_same_key_stress_dichotomy():
    L = 200
    k = np.zeros(4)
    k[0] = np.sqrt(3.0)
    K = np.tile(k, (L, 1))
    V = np.tile([1.0, 0.5], (L, 1))
    batch = SequenceBatch(K, K, V, np.ones(L))
    euler = recurrent_forward(DeltaEuler(), batch)
    efla = recurrent_forward(ExactEFLA(), batch)
    assert efla.state_norm_trace.max() < 2.0
    assert euler.state_norm_trace[-1] > 1e50


def test_divergence_index_recorded():
    L = 2000
    K = np.tile([3.0, 0.0], (L, 1))
    batch = SequenceBatch(K, K, np.ones((L, 1)), np.ones(L))
    res = recurrent_forward(DeltaEuler(), batch)
    assert res.diverged
    t = res.divergence_index
    assert np.isfinite(res.state_norm_trace[t - 1]) and not np.isfinite(res.state_norm_trace[t])
    # growth 8x per step from an O(1) state overflows near 1e308
    assert 300 < t < 400
    assert not recurrent_forward(ExactEFLA(), batch).diverged


def test_reference_method_scan(rng):
    batch = make_batch(rng, 6, 4, 3)
    ref = recurrent_forward(Reference(2000), batch)
    exact = recurrent_forward(ExactEFLA(), batch)
    assert np.abs(ref.O - exact.O).max() <= 1e-10


def test_batch_validation():
    with pytest.raises(ValueError):
        SequenceBatch(np.ones((2, 3)), np.ones((2, 4)), np.ones((2, 1)), [1, 1])
    with pytest.raises(ValueError):
        SequenceBatch(np.ones((2, 3)), np.ones((2, 3)), np.ones((3, 1)), [1, 1])
    with pytest.raises(ValueError):
        SequenceBatch(np.ones((2, 3)), np.ones((2, 3)), np.ones((2, 1)), [1, -1])
    with pytest.raises(ValueError):
        SequenceBatch(np.ones((2, 3)), np.full((2, 3), np.nan), np.ones((2, 1)), [1, 1])
    with pytest.raises(ValueError):
        SequenceBatch(np.ones((0, 3)), np.ones((0, 3)), np.ones((0, 1)), [])


def test_normalize_keys_examples():
    K = np.array([[3.0, 4.0], [0.0, 0.0]])
    batch = SequenceBatch(K.copy(), K, np.ones((2, 1)), [1.0, 1.0])
    out, n_zero = normalize_keys(batch)
    np.testing.assert_array_equal(out.K, [[0.6, 0.8], [0.0, 0.0]])
    assert n_zero == 1
    np.testing.assert_array_equal(out.Q, K)
    out, n_zero = normalize_keys(batch, normalize_queries=True)
    np.testing.assert_array_equal(out.Q, [[0.6, 0.8], [0.0, 0.0]])
    assert n_zero == 2


def test_normalized_keys_have_unit_norm(rng):
    batch = make_batch(rng, 500, 16, 2, key_norm=(1e-3, 50.0))
    out, n_zero = normalize_keys(batch)
    assert n_zero == 0
    assert np.abs(np.einsum("ij,ij->i", out.K, out.K) - 1.0).max() <= 1e-15
