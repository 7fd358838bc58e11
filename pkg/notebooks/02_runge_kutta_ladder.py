"""
Runge-Kutta truncations converge to the exact gate
==================================================

For linear dynamics an N-stage Runge-Kutta step equals the order-N Taylor
polynomial of the propagator. Each method therefore reduces to a scalar
coefficient that multiplies k k^T S and k v^T, and the error against the
exact gate shrinks factorially in N.
"""

# %%
import math

from efla import RKN, ExactEFLA, coefficients
from efla.harness import rk_convergence

beta, lam = 1.0, 1.0
exact = coefficients(ExactEFLA(), beta, lam).c_transition
print(f"exact gate at x = 1: {exact:.16f}")

# %%
for row in rk_convergence(range(1, 16), beta, lam):
    print(f"N = {row['order']:2d}  error = {row['error']:.3e}  "
          f"bound = {row['bound']:.3e}  ratio = {row['bound_ratio']:.3f}")

# %%
# At larger x the low orders overshoot before the factorial takes over.
for x in (1.0, 4.0, 10.0):
    errs = [abs(coefficients(RKN(n), 1.0, x).c_transition
                - coefficients(ExactEFLA(), 1.0, x).c_transition) for n in (1, 2, 4, 8, 16, 32)]
    print(f"x = {x:4.1f}: " + "  ".join(f"{e:.1e}" for e in errs))

# %%
# x = 0 is a fixed point of the whole family: every coefficient equals beta.
print({str(m): coefficients(m, 0.7, 0.0).c_transition for m in (RKN(1), RKN(4), ExactEFLA())})
print("e^-1 =", math.exp(-1))
