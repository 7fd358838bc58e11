"""
Stability along the key direction
=================================

Repeatedly writing the same key multiplies the key-aligned part of the
state's deviation from its fixed point by a fixed factor per step. Explicit
methods have polynomial factors that exceed 1 once beta*lam grows, while
the exact step always contracts by exp(-beta*lam).
"""

# %%
import numpy as np

from efla import DeltaEuler, ExactEFLA, SequenceBatch, recurrent_forward
from efla.harness import stability_sweep

for row in stability_sweep([0.5, 1.0, 2.0, 3.0, 5.0]):
    print(f"x = {row['x']:3.1f}  {row['method']:<5}  measured {row['measured_factor']:.6f}  "
          f"predicted {row['predicted_factor']:.6f}")

# %%
# Same-key stress test: Euler blows up, the exact step settles.
L = 1200
k = np.array([np.sqrt(3.0), 0.0, 0.0, 0.0])
K = np.tile(k, (L, 1))
batch = SequenceBatch(K, K, np.ones((L, 2)), np.ones(L))
for method in (DeltaEuler(), ExactEFLA()):
    res = recurrent_forward(method, batch)
    trace = res.state_norm_trace
    print(f"{method}: first non-finite token = {res.divergence_index}, "
          f"norm after 10 steps = {trace[9]:.3e}")
