"""
Closed-form step for rank-1 dynamics
====================================

A key k and value v define the linear ODE dS/dt = -k k^T S + k v^T.
Because A = k k^T satisfies A^n = lam^(n-1) A, the matrix exponential
collapses to a single rank-1 correction, and the whole step reduces to one
scalar gate alpha = (1 - exp(-beta*lam)) / lam.
"""

# %%
import numpy as np
from scipy.linalg import expm

from efla import ExactEFLA, DeltaEuler, StepInput, decay_gate, step

rng = np.random.default_rng(0)
d_k, d_v = 6, 3
k = rng.standard_normal(d_k)
v = rng.standard_normal(d_v)
S = rng.standard_normal((d_k, d_v))
beta = 0.8
lam = k @ k
print(f"lam = {lam:.4f}, beta*lam = {beta * lam:.4f}")

# %%
# The gate is always below beta: exact integration writes less than Euler.
g = decay_gate(beta, lam)
print(f"alpha = {g.alpha:.6f}  (beta = {beta})")
print(f"retention along k: exp(-beta*lam) = {g.retention:.6f}")

# %%
# Compare with a dense matrix exponential. The augmented generator
# [[-A, b], [0, 0]] carries the forcing term along with the decay.
A = np.outer(k, k)
M = np.zeros((d_k + d_v, d_k + d_v))
M[:d_k, :d_k] = -A
M[:d_k, d_k:] = np.outer(k, v)
E = expm(beta * M)
dense = E[:d_k, :d_k] @ S + E[:d_k, d_k:]
closed = step(ExactEFLA(), S, StepInput(k, v, beta))
print("max |closed form - expm| =", np.abs(closed - dense).max())

# %%
# Only the component along k moves; the orthogonal complement is untouched.
khat = k / np.linalg.norm(k)
hom = step(ExactEFLA(), S, StepInput(k, np.zeros(d_v), beta))
print("ratio along k:", (khat @ hom) / (khat @ S))
proj = np.eye(d_k) - np.outer(khat, khat)
print("orthogonal drift:", np.abs(proj @ hom - proj @ S).max())

# %%
# For tiny keys the exact step and the delta rule become indistinguishable.
for scale in (1.0, 1e-2, 1e-4, 1e-6):
    inp = StepInput(scale * khat, v, beta)
    gap = np.abs(step(ExactEFLA(), S, inp) - step(DeltaEuler(), S, inp)).max()
    print(f"|k| = {scale:g}: max gap {gap:.3e}")
