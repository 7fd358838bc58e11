import numpy as np
import pytest

from efla.chunkwise import (ChunkPlan, chunk_forward, decay_product, method_rates,
                            ut_transform, wy_sequential)
from efla.integrators import (RK2, RK4, RKN, DeltaEuler, ExactEFLA, Reference,
                              VanillaLinear, coefficients)
from efla.rank1 import StepInput
from efla.scan import SequenceBatch, recurrent_forward

from conftest import make_batch, unit

ODE = [DeltaEuler(), RK2(), RK4(), RKN(6), ExactEFLA()]


def test_plan_bounds():
    assert ChunkPlan(64).bounds(257)[-1] == (256, 257)
    assert len(ChunkPlan(64).bounds(257)) == 5
    assert ChunkPlan(10).bounds(5) == [(0, 5)]
    for bad in (0, -1, 2.5):
        with pytest.raises(ValueError):
            ChunkPlan(bad)


def test_wy_single_token(rng):
    k, v = rng.standard_normal((1, 4)), rng.standard_normal((1, 3))
    W, U = wy_sequential(k, v, [0.3])
    np.testing.assert_array_equal(W, 0.3 * k)
    np.testing.assert_array_equal(U, 0.3 * v)
    f = ut_transform(k, v, [0.3])
    np.testing.assert_array_equal(f.T, [[0.3]])
    np.testing.assert_array_equal(f.W, 0.3 * k)


def test_wy_orthogonal_pair(rng):
    K = np.eye(4)[:2] * [[2.0], [0.5]]
    W, _ = wy_sequential(K, rng.standard_normal((2, 3)), [0.3, 0.7])
    np.testing.assert_array_equal(W[1], 0.7 * K[1])


def test_wy_two_token_closed_form(rng):
    K, V = rng.standard_normal((2, 5)), rng.standard_normal((2, 3))
    a1, a2 = 0.4, 0.9
    g = K[1] @ K[0]
    W, U = wy_sequential(K, V, [a1, a2])
    np.testing.assert_allclose(W[1], a2 * (K[1] - g * a1 * K[0]), atol=1e-15)
    np.testing.assert_allclose(U[1], a2 * (V[1] - g * a1 * V[0]), atol=1e-15)
    f = ut_transform(K, V, [a1, a2])
    np.testing.assert_allclose(f.T, [[a1, 0.0], [-a2 * g * a1, a2]], atol=1e-15)
    np.testing.assert_allclose(f.W, W, atol=1e-15)


@pytest.mark.parametrize("C", [1, 3, 16, 64])
def test_ut_matches_sequential(rng, C):
    for _ in range(10):
        K = rng.standard_normal((C, 12)) / np.sqrt(12)
        V = rng.standard_normal((C, 7))
        a = rng.uniform(0, 1, C)
        W, U = wy_sequential(K, V, a)
        f = ut_transform(K, V, a)
        assert np.abs(f.W - W).max() <= 1e-10
        assert np.abs(f.U - U).max() <= 1e-10
        assert np.all(np.triu(f.T, 1) == 0.0)


def test_ut_separate_input_rates(rng):
    K, V = rng.standard_normal((6, 4)), rng.standard_normal((6, 2))
    a, b = rng.uniform(0, 1, 6), rng.uniform(0, 1, 6)
    W, U = wy_sequential(K, V, a, b)
    f = ut_transform(K, V, a, b)
    np.testing.assert_allclose(f.U, U, atol=1e-13)
    np.testing.assert_allclose(f.W, W, atol=1e-13)


def test_decay_product_examples(rng):
    k = rng.standard_normal(4)
    inp = StepInput(k, np.ones(2), 0.5)
    a = coefficients(ExactEFLA(), 0.5, k @ k).c_transition
    np.testing.assert_allclose(decay_product([inp], ExactEFLA()),
                               np.eye(4) - a * np.outer(k, k), atol=1e-15)
    e0, e1 = np.eye(3)[0] * 2.0, np.eye(3)[1]
    P = decay_product([StepInput(e0, [1.0], 0.1), StepInput(e1, [1.0], 0.3)], DeltaEuler())
    np.testing.assert_allclose(P, np.diag([1 - 0.4, 1 - 0.3, 1.0]), atol=1e-15)
    with pytest.raises(ValueError):
        decay_product([], ExactEFLA())


@pytest.mark.parametrize("method", ODE, ids=str)
def test_wy_identity(rng, method):
    batch = make_batch(rng, 8, 10, 3, key_norm=(0.0, 1.5))
    inputs = [batch.token(t) for t in range(8)]
    a, _ = method_rates(method, batch.beta, np.einsum("ij,ij->i", batch.K, batch.K))
    W = ut_transform(batch.K, batch.V, a).W
    assert np.abs(decay_product(inputs, method) - (np.eye(10) - batch.K.T @ W)).max() <= 1e-10


@pytest.mark.parametrize("method", ODE, ids=str)
def test_h_identity(rng, method):
    batch = make_batch(rng, 16, 8, 5)
    lam = np.einsum("ij,ij->i", batch.K, batch.K)
    a, b = method_rates(method, batch.beta, lam)
    U = ut_transform(batch.K, batch.V, a).U
    S = recurrent_forward(method, batch).S_final
    assert np.abs(batch.K.T @ U - S).max() <= 1e-10


@pytest.mark.parametrize("method", ODE + [VanillaLinear()], ids=str)
@pytest.mark.parametrize("C", [1, 2, 7, 16, 64])
def test_matches_recurrent(rng, method, C):
    batch = make_batch(rng, 130, 16, 8)
    S0 = rng.standard_normal((16, 8))
    rec = recurrent_forward(method, batch, S0)
    ch = chunk_forward(method, batch, C, S0)
    scale = max(1.0, np.abs(rec.O).max())
    assert np.abs(ch.O - rec.O).max() <= 1e-9 * scale
    assert np.abs(ch.S_final - rec.S_final).max() <= 1e-9 * scale
    np.testing.assert_allclose(ch.state_norm_trace, rec.state_norm_trace, rtol=1e-9)


def test_chunk_size_one_equals_recurrent(rng):
    batch = make_batch(rng, 50, 6, 4)
    rec = recurrent_forward(ExactEFLA(), batch)
    ch = chunk_forward(ExactEFLA(), batch, 1)
    assert np.abs(ch.O - rec.O).max() <= 1e-13


def test_single_chunk(rng):
    batch = make_batch(rng, 8, 6, 4)
    rec = recurrent_forward(ExactEFLA(), batch)
    assert np.abs(chunk_forward(ExactEFLA(), batch, 8).O - rec.O).max() <= 1e-10


def test_partial_trailing_chunk(rng):
    batch = make_batch(rng, 257, 16, 16)
    rec = recurrent_forward(DeltaEuler(), batch)
    ch = chunk_forward(DeltaEuler(), batch, ChunkPlan(64))
    assert np.abs(ch.O - rec.O).max() <= 1e-9
    assert np.abs(ch.S_final - rec.S_final).max() <= 1e-9


def test_chunk_size_invariance(rng):
    batch = make_batch(rng, 100, 8, 8, key_norm=(0.0, 2.0), beta=(0.0, 1.0))
    outs = [chunk_forward(ExactEFLA(), batch, C).O for C in (1, 3, 10, 32, 100, 500)]
    for O in outs[1:]:
        assert np.abs(O - outs[0]).max() <= 1e-9


def test_wide_range_relative_agreement(rng):
    # unstable methods blow up on this range; agreement is relative to magnitude
    batch = make_batch(rng, 128, 16, 8, key_norm=(0.0, 3.0), beta=(0.0, 2.0))
    for method in ODE:
        rec = recurrent_forward(method, batch)
        ch = chunk_forward(method, batch, 16)
        scale = np.abs(rec.O).max()
        assert np.abs(ch.O - rec.O).max() <= 1e-9 * scale


def test_diagonal_of_mask_matters(rng):
    # a single-token chunk has an output only through the diagonal term
    batch = make_batch(rng, 1, 4, 2, key_norm=(1.0, 1.0), beta=(1.0, 1.0))
    batch = batch.with_(Q=batch.K.copy())
    out = chunk_forward(DeltaEuler(), batch, 4).O[0]
    np.testing.assert_allclose(out, batch.V[0], atol=1e-15)


def test_divergence_in_chunks():
    L = 2000
    K = np.tile([3.0, 0.0], (L, 1))
    batch = SequenceBatch(K, K, np.ones((L, 1)), np.ones(L))
    res = chunk_forward(DeltaEuler(), batch, 16)
    assert res.diverged and 300 < res.divergence_index <= 341
    assert chunk_forward(DeltaEuler(), batch, 1).divergence_index == 341
    assert not chunk_forward(ExactEFLA(), batch, 16).diverged


def test_rejects_reference(rng):
    batch = make_batch(rng, 4, 3, 2)
    with pytest.raises(ValueError):
        chunk_forward(Reference(10), batch)
    with pytest.raises(TypeError):
        chunk_forward("efla", batch)


def test_vanilla_rates():
    a, b = method_rates(VanillaLinear(), [0.5, 2.0], [1.0, 3.0])
    np.testing.assert_array_equal(a, [0.0, 0.0])
    np.testing.assert_array_equal(b, [1.0, 1.0])
