"""Pluggable external MILP solver contract.

A backend is a callable `(model, config, warm_start) -> Solution` honoring
the same contract as `solve_bnb`.  The shipped "external" backend adapts
the model to scipy's HiGHS-based `milp`.  HiGHS takes no warm start, so
the adapter enforces warm-start dominance itself: if the solver returns
nothing better than the supplied warm start, the warm start is returned.
"""

import numpy as np

from .model import (
    BackendUnavailableError,
    INF,
    MilpModel,
    Solution,
    SolveStatus,
    SolverConfig,
)
from .branch_bound import solve_bnb

_REGISTRY = {}


def register_backend(name, fn):
    _REGISTRY[name] = fn


def available_backends():
    return sorted(_REGISTRY)


def backend_solve(model: MilpModel, config: SolverConfig | None = None,
                  warm_start=None, backend="external") -> Solution:
    """Solve via a registered backend; raises BackendUnavailableError if absent."""
    fn = _REGISTRY.get(backend)
    if fn is None:
        raise BackendUnavailableError(
            f"no backend registered under {backend!r}; available: {available_backends()}")
    return fn(model, config or SolverConfig(), warm_start)


def _scipy_solve(model, config, warm_start):
    try:
        import scipy.sparse as sp
        from scipy.optimize import Bounds, LinearConstraint, milp
    except ImportError as exc:  # pragma: no cover
        raise BackendUnavailableError("scipy is not installed") from exc

    n = model.num_variables
    c = model.objective_vector()
    lb, ub = model.bounds_arrays()
    integrality = np.zeros(n)
    integrality[model.integer_indices()] = 1

    rows, cols, data, lo, hi = [], [], [], [], []
    for i, con in enumerate(model.constraints):
        for j, a in con.coeffs.items():
            rows.append(i)
            cols.append(j)
            data.append(a)
        if con.sense == "<=":
            lo.append(-np.inf)
            hi.append(con.rhs)
        elif con.sense == ">=":
            lo.append(con.rhs)
            hi.append(np.inf)
        else:
            lo.append(con.rhs)
            hi.append(con.rhs)
    A = sp.csr_matrix((data, (rows, cols)), shape=(model.num_constraints, n))
    res = milp(
        c=c,
        constraints=[LinearConstraint(A, np.array(lo), np.array(hi))],
        integrality=integrality,
        bounds=Bounds(lb, ub),
        options={"time_limit": config.time_limit, "mip_rel_gap": config.rel_gap},
    )

    ws_obj = INF
    if warm_start is not None:
        ws = np.asarray(warm_start, dtype=float)
        ws_obj = float(c @ ws)

    found = res.x is not None
    obj = float(res.fun) if found else INF
    bound = float(getattr(res, "mip_dual_bound", -INF) or -INF)
    if found and obj <= ws_obj + 1e-9:
        values, objective = np.asarray(res.x, dtype=float), obj
        solver_won = True
    elif warm_start is not None:
        values, objective = ws, ws_obj
        solver_won = False
    else:
        values, objective = None, INF
        solver_won = False

    if res.status == 0 and solver_won:
        status = SolveStatus.OPTIMAL
        bound = objective
    elif res.status == 2 and warm_start is None:
        return Solution(SolveStatus.INFEASIBLE)
    elif res.status == 3:
        return Solution(SolveStatus.UNBOUNDED, objective=-INF, best_bound=-INF)
    elif values is not None:
        status = SolveStatus.TIME_LIMIT if res.status == 1 else SolveStatus.FEASIBLE
    else:
        status = SolveStatus.TIME_LIMIT
    gap = max(0.0, objective - bound) if values is not None else INF
    return Solution(status, values, objective, best_bound=bound, gap=gap)


def _builtin_solve(model, config, warm_start):
    return solve_bnb(model, config, warm_start)


register_backend("external", _scipy_solve)
register_backend("builtin", _builtin_solve)
