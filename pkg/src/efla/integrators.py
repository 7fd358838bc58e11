"""One-step integrators for ``dS/dt = -A S + b`` with ``A = k k^T``, ``b = k v^T``.

Every method in the family reduces to

    S' = S - c_transition * k (k^T S) + c_input * k v^T

because ``A^n = lam^(n-1) A`` and ``A b = lam b`` turn each matrix power
series into a scalar one in ``x = beta * lam``. :func:`coefficients` returns
those two scalars; :func:`explicit_operators` builds the same operators from
genuine matrix powers so the collapse can be checked. :func:`reference_step`
is an independent classical RK-4 sub-stepping solver.
"""
from dataclasses import dataclass
import math

import numpy as np
import scipy.linalg

from .numerics import as_matrix
from .rank1 import StepInput, decay_gate

__all__ = [
    "Method",
    "VanillaLinear",
    "DeltaEuler",
    "RK2",
    "RK4",
    "RKN",
    "ExactEFLA",
    "Reference",
    "ODE_FAMILY",
    "parse_method",
    "StepCoefficients",
    "series_phi",
    "coefficients",
    "step",
    "reference_step",
    "explicit_operators",
]


class Method:
    """Base class for the integrator variants."""

    name = "method"

    #: Whether the update is a discretisation of the ODE (Euler, RK-N, exact).
    ode = True

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class VanillaLinear(Method):
    name = "vanilla"
    ode = False


@dataclass(frozen=True)
class DeltaEuler(Method):
    name = "euler"


@dataclass(frozen=True)
class RK2(Method):
    name = "rk2"


@dataclass(frozen=True)
class RK4(Method):
    name = "rk4"


@dataclass(frozen=True)
class RKN(Method):
    order: int = 1

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"RKN order must be an integer >= 1, got {self.order}")

    @property
    def name(self):
        return f"rkn{self.order}"


@dataclass(frozen=True)
class ExactEFLA(Method):
    name = "efla"


@dataclass(frozen=True)
class Reference(Method):
    substeps: int = 100_000

    def __post_init__(self):
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ValueError(f"substeps must be an integer >= 1, got {self.substeps}")

    @property
    def name(self):
        return f"reference{self.substeps}"


ODE_FAMILY = (DeltaEuler, RK2, RK4, RKN, ExactEFLA)

_ALIASES = {
    "vanilla": VanillaLinear,
    "linear": VanillaLinear,
    "euler": DeltaEuler,
    "delta": DeltaEuler,
    "deltanet": DeltaEuler,
    "rk2": RK2,
    "rk4": RK4,
    "efla": ExactEFLA,
    "exact": ExactEFLA,
}


def parse_method(text):
    """Parse a method name.

    Accepted forms: ``vanilla``, ``euler``, ``rk2``, ``rk4``, ``rknN`` (or
    ``rkn:N``) for a general order, ``efla``, ``reference`` / ``referenceN``
    (or ``reference:N``).
    """
    if isinstance(text, Method):
        return text
    key = str(text).strip().lower()
    if key in _ALIASES:
        return _ALIASES[key]()
    for prefix, cls in (("rkn", RKN), ("reference", Reference)):
        if key.startswith(prefix):
            rest = key[len(prefix):].lstrip(":")
            if not rest:
                return cls()
            if rest.isdigit():
                return cls(int(rest))
    raise ValueError(f"unknown method {text!r}")


@dataclass(frozen=True)
class StepCoefficients:
    c_transition: float
    c_input: float


def series_phi(order, x):
    """Truncated propagator series at ``x = beta * lam``.

    Returns ``(phi0, phi1)`` with

        phi0 = sum_{n=0}^{N}   (-x)^n / n!
        phi1 = sum_{n=0}^{N-1} (-x)^n / (n+1)!

    both by Horner's scheme from the highest-order term down.
    """
    if int(order) != order or order < 1:
        raise ValueError(f"order must be an integer >= 1, got {order}")
    if not x >= 0:
        raise ValueError(f"x must be >= 0, got {x}")
    phi0 = 1.0
    for n in range(int(order), 0, -1):
        phi0 = 1.0 - x / n * phi0
    phi1 = 1.0
    for n in range(int(order) - 1, 0, -1):
        phi1 = 1.0 - x / (n + 1) * phi1
    return phi0, phi1


def coefficients(method, beta, lam):
    beta = float(beta)
    lam = float(lam)
    if not (beta >= 0 and lam >= 0):
        raise ValueError(f"beta and lam must be >= 0, got beta={beta}, lam={lam}")
    x = beta * lam
    if isinstance(method, VanillaLinear):
        return StepCoefficients(0.0, 1.0)
    if isinstance(method, DeltaEuler):
        c = beta
    elif isinstance(method, RK2):
        c = beta * (1.0 - x / 2.0)
    elif isinstance(method, RK4):
        c = beta * (1.0 - x / 2.0 * (1.0 - x / 3.0 * (1.0 - x / 4.0)))
    elif isinstance(method, RKN):
        c = beta * series_phi(method.order, x)[1]
    elif isinstance(method, ExactEFLA):
        c = decay_gate(beta, lam).alpha
    elif isinstance(method, Reference):
        raise ValueError("the reference solver has no single-step coefficients")
    else:
        raise TypeError(f"not a Method: {method!r}")
    return StepCoefficients(c, c)


def _update(S, k, v, coef):
    # S - c_t k (k^T S) + c_i k v^T, folded into one outer product
    return S + np.outer(k, coef.c_input * v - coef.c_transition * (k @ S))


def step(method, S, inp):
    """Advance the memory state ``S`` (d_k x d_v) by one token."""
    S = as_matrix(S, "S")
    if not isinstance(inp, StepInput):
        inp = StepInput(*inp)
    if S.shape != (inp.k.shape[0], inp.v.shape[0]):
        raise ValueError(
            f"state shape {S.shape} does not match (d_k, d_v)="
            f"({inp.k.shape[0]}, {inp.v.shape[0]})"
        )
    if isinstance(method, Reference):
        return reference_step(S, inp, method.substeps)
    return _update(S, inp.k, inp.v, coefficients(method, inp.beta, inp.lam))


def _rk4_substep(f, Y, h):
    k1 = f(Y)
    k2 = f(Y + 0.5 * h * k1)
    k3 = f(Y + 0.5 * h * k2)
    k4 = f(Y + h * k3)
    return Y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def reference_step(S, inp, substeps, mode="auto"):
    """Integrate the held-constant ODE over ``[0, beta]`` with classical RK-4.

    ``A = k k^T`` and ``b = k v^T`` are formed explicitly and the four RK
    stages are evaluated with dense matrix products, so nothing here relies
    on the rank-1 shortcut.

    Parameters
    ----------
    substeps : int
        Number of equal substeps, ``h = beta / substeps``.
    mode : {"auto", "loop", "power"}
        ``"loop"`` runs the substeps one by one. ``"power"`` runs the four
        stages once on the augmented system ``d/dt [S; I] = [[-A, b], [0, 0]] [S; I]``
        to get the (exactly affine) substep map ``M`` and then applies
        ``M**substeps`` by repeated squaring. ``"auto"`` loops for up to 64
        substeps.
    """
    S = as_matrix(S, "S")
    if not isinstance(inp, StepInput):
        inp = StepInput(*inp)
    if int(substeps) != substeps or substeps < 1:
        raise ValueError(f"substeps must be an integer >= 1, got {substeps}")
    substeps = int(substeps)
    dk, dv = inp.k.shape[0], inp.v.shape[0]
    if S.shape != (dk, dv):
        raise ValueError(f"state shape {S.shape} does not match ({dk}, {dv})")
    if mode == "auto":
        mode = "loop" if substeps <= 64 else "power"
    A = np.outer(inp.k, inp.k)
    b = np.outer(inp.k, inp.v)
    h = inp.beta / substeps

    if mode == "loop":
        f = lambda Y: -A @ Y + b
        for _ in range(substeps):
            S = _rk4_substep(f, S, h)
        return S
    if mode == "power":
        G = np.zeros((dk + dv, dk + dv))
        G[:dk, :dk] = -A
        G[:dk, dk:] = b
        M = _rk4_substep(lambda Y: G @ Y, np.eye(dk + dv), h)
        Y0 = np.vstack([S, np.eye(dv)])
        return (np.linalg.matrix_power(M, substeps) @ Y0)[:dk]
    raise ValueError(f"unknown mode {mode!r}")


def explicit_operators(method, inp, d=None):
    """Dense ``(transition, input_term)`` built from powers of ``A``.

    Returns the ``d x d`` operator applied to ``S`` and the ``d x d_v`` term
    added to it. For RK-type methods these are the truncated power series in
    ``-beta A``; for the exact method they come from a general-purpose matrix
    exponential of the augmented generator, not from the closed-form gate.
    Intended as a test oracle.
    """
    if not isinstance(inp, StepInput):
        inp = StepInput(*inp)
    dk = inp.k.shape[0]
    if d is not None and d != dk:
        raise ValueError(f"d={d} does not match len(k)={dk}")
    beta = inp.beta
    A = np.outer(inp.k, inp.k)
    b = np.outer(inp.k, inp.v)
    eye = np.eye(dk)

    if isinstance(method, DeltaEuler):
        order = 1
    elif isinstance(method, RK2):
        return (eye - beta * A + 0.5 * beta**2 * A @ A,
                beta * (eye - 0.5 * beta * A) @ b)
    elif isinstance(method, RK4):
        order = 4
    elif isinstance(method, RKN):
        order = method.order
    elif isinstance(method, ExactEFLA):
        dv = inp.v.shape[0]
        G = np.zeros((dk + dv, dk + dv))
        G[:dk, :dk] = -beta * A
        G[:dk, dk:] = beta * b
        E = scipy.linalg.expm(G)
        return E[:dk, :dk], E[:dk, dk:]
    else:
        raise ValueError(f"no explicit operator for {method}")

    transition = np.zeros_like(A)
    forcing = np.zeros_like(A)
    power = eye
    for n in range(order + 1):
        transition += power / math.factorial(n)
        if n < order:
            forcing += power / math.factorial(n + 1)
        power = power @ (-beta * A)
    return transition, beta * forcing @ b
