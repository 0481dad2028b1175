"""Shared numerical tolerances and iteration caps.

All solvers take a Tolerances instance so sweeps can tighten or relax
settings without touching module-level state.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    # certification threshold on the worst-case rate violation, in bits
    eps_violation: float = 1e-3
    # alternating-optimization stopping tolerance on the objective, in bits
    # (relative for power objectives)
    eps_rate: float = 1e-4
    # absolute threshold on the parametric pessimization value
    eps_dinkelbach: float = 1e-7
    max_dinkelbach_iter: int = 25
    max_ao_iter: int = 200
    max_outer_iter: int = 50
    # conic solver feasibility/optimality tolerance
    cone_tol: float = 1e-8
    # worst-case channels closer than this to an existing sample are dropped
    duplicate_tol: float = 1e-6

    def __post_init__(self):
        if self.eps_violation <= 0 or self.eps_rate <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_ao_iter < 1 or self.max_outer_iter < 1:
            raise ValueError("iteration caps must be at least 1")


DEFAULT_TOLERANCES = Tolerances()
