from .model import (
    BINARY,
    CONTINUOUS,
    CORE,
    EQ,
    GE,
    INF,
    INTEGER,
    LE,
    USER_CUT,
    BackendUnavailableError,
    FeasibilityReport,
    InfeasibleWarmStartError,
    LinearConstraint,
    MilpModel,
    ModelError,
    Solution,
    SolveStatus,
    SolverConfig,
    check_feasible,
    write_lp,
)
from .simplex import SimplexError, solve_dense_lp, solve_lp_simplex
from .branch_bound import solve_bnb
from .backend import available_backends, backend_solve, register_backend

__all__ = [
    "BINARY", "CONTINUOUS", "CORE", "EQ", "GE", "INF", "INTEGER", "LE",
    "USER_CUT", "BackendUnavailableError", "FeasibilityReport",
    "InfeasibleWarmStartError", "LinearConstraint", "MilpModel", "ModelError",
    "Solution", "SolveStatus", "SolverConfig", "SimplexError",
    "available_backends", "backend_solve", "check_feasible", "register_backend",
    "solve_bnb", "solve_dense_lp", "solve_lp_simplex", "write_lp",
]
