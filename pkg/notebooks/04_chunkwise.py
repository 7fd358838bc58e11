"""
Chunkwise-parallel scan
=======================

Inside a chunk the product of rank-1 transitions is I - K^T W, and the
accumulated writes are K^T U. A single unit lower-triangular solve gives
W and U, and the chunk's outputs then come from dense matrix products.
"""

# %%
import time

import numpy as np

from efla import ExactEFLA, SequenceBatch, chunk_forward, recurrent_forward
from efla.chunkwise import decay_product, ut_transform, wy_sequential
from efla.integrators import coefficients

rng = np.random.default_rng(3)
C, d = 8, 10
K = rng.standard_normal((C, d)) / np.sqrt(d)
V = rng.standard_normal((C, 4))
beta = rng.uniform(0, 1, C)
alphas = np.array([coefficients(ExactEFLA(), b, k @ k).c_transition for b, k in zip(beta, K)])

# %%
W_seq, U_seq = wy_sequential(K, V, alphas)
f = ut_transform(K, V, alphas)
print("UT vs sequential:", np.abs(f.W - W_seq).max(), np.abs(f.U - U_seq).max())
batch = SequenceBatch(K, K, V, beta)
P = decay_product([batch.token(t) for t in range(C)], ExactEFLA())
print("WY identity:", np.abs(P - (np.eye(d) - K.T @ f.W)).max())

# %%
L = 2048
Kl = rng.standard_normal((L, 32))
Kl /= np.linalg.norm(Kl, axis=1, keepdims=True)
big = SequenceBatch(rng.standard_normal((L, 32)), Kl, rng.standard_normal((L, 32)),
                    rng.uniform(0, 1, L))
t0 = time.perf_counter()
rec = recurrent_forward(ExactEFLA(), big)
t1 = time.perf_counter()
ch = chunk_forward(ExactEFLA(), big, 64)
t2 = time.perf_counter()
print(f"recurrent {t1 - t0:.3f}s, chunkwise {t2 - t1:.3f}s, "
      f"max output gap {np.abs(ch.O - rec.O).max():.2e}")
