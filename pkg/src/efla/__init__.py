"""Exact rank-1 linear-attention updates and their Runge-Kutta truncations."""
from .chunkwise import (ChunkFactors, ChunkPlan, chunk_forward, decay_product,
                        ut_transform, wy_sequential)
from .integrators import (RK2, RK4, RKN, DeltaEuler, ExactEFLA, Method,
                          Reference, StepCoefficients, VanillaLinear,
                          coefficients, explicit_operators, parse_method,
                          reference_step, series_phi, step)
from .numerics import (dot, frobenius_norm, matvec_transposed, outer,
                       unit_lower_solve)
from .rank1 import (DecayGate, StepInput, apply_transition, decay_gate,
                    gate_fn, rank1_power_coefficient, squared_norm,
                    transition_matrix)
from .scan import ScanResult, SequenceBatch, normalize_keys, recurrent_forward

__version__ = "0.1.0"
