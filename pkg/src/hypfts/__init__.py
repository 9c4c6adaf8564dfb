"""
hypfts: decoupled first-order hyperbolic systems on [0, 1] with boundary
reflections.

Characteristics and their exits, the pull-back operator Q and its powers,
two independent solvers, randomized checks of finite-time stabilization,
and the inverse source problem for nilpotent linear boundaries.
"""

from .exprlang import parse, evaluate, pretty
from .system import SystemSpec, validate, require_valid, compatibility_defect, nilpotency_index
from .pifield import PiField, BoundaryTrace, InitialData, sample_Ch, write_csv
from .qcalc import QContext, apply_Q, apply_R, apply_S, q_power, stabilization_index
from .solver import solve_qpower, solve_marching, solve_l2, residuals
from .fts import check_C0, check_C00, estimate_Topt, certify_linear_nilpotent
from .inverse import (
    InverseProblem,
    apply_generator,
    nilpotency_time,
    reconstruct_state,
    recover_source,
    semigroup_apply,
)

__version__ = "0.1.0"

__all__ = [
    "parse", "evaluate", "pretty",
    "SystemSpec", "validate", "require_valid", "compatibility_defect", "nilpotency_index",
    "PiField", "BoundaryTrace", "InitialData", "sample_Ch", "write_csv",
    "QContext", "apply_Q", "apply_R", "apply_S", "q_power", "stabilization_index",
    "solve_qpower", "solve_marching", "solve_l2", "residuals",
    "check_C0", "check_C00", "estimate_Topt", "certify_linear_nilpotent",
    "InverseProblem", "apply_generator", "nilpotency_time", "reconstruct_state",
    "recover_source", "semigroup_apply",
]
