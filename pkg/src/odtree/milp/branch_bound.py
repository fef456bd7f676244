"""Exact branch-and-bound MILP solver on top of the dense simplex.

Best-bound node selection, most-fractional branching with ties broken by
lowest variable id, and an optional warm start that seeds the incumbent.
Deterministic for a fixed model and configuration.  Intended for
desk-scale instances and as the reference oracle for external backends.
"""

import heapq
import math
import time

import numpy as np

from .model import (
    BINARY,
    EQ,
    INF,
    InfeasibleWarmStartError,
    MilpModel,
    Solution,
    SolveStatus,
    SolverConfig,
    check_feasible,
)
from . import simplex


def _partition_rows(model):
    """Rows of the form sum(binary vars) == 1; used for bound propagation."""
    rows = []
    for c in model.constraints:
        if c.sense != EQ or c.rhs != 1.0 or not c.coeffs:
            continue
        ok = all(a == 1.0 and model.variables[j].kind == BINARY for j, a in c.coeffs.items())
        if ok:
            rows.append(np.fromiter(c.coeffs.keys(), dtype=np.int64))
    return rows


def _propagate(lbv, ubv, seeds, var_rows, rows):
    """Fix implied binaries along partition rows; False on contradiction."""
    queue = list(seeds)
    while queue:
        j = queue.pop()
        for ridx in var_rows.get(j, ()):
            members = rows[ridx]
            if lbv[j] >= 1.0:
                for k in members:
                    if k == j:
                        continue
                    if lbv[k] >= 1.0:
                        return False
                    ubv[k] = 0.0
            if ubv[j] <= 0.0:
                open_vars = [k for k in members if ubv[k] > 0.0]
                if not open_vars:
                    return False
                if len(open_vars) == 1 and lbv[open_vars[0]] < 1.0:
                    lbv[open_vars[0]] = 1.0
                    queue.append(open_vars[0])
    return True


def solve_bnb(model: MilpModel, config: SolverConfig | None = None,
              warm_start=None) -> Solution:
    """Solve the MILP exactly by branch-and-bound over LP relaxations.

    Parameters
    ----------
    model : MilpModel
        Must contain at least one binary/integer variable.
    config : SolverConfig, optional
    warm_start : array-like, optional
        Feasible values for every variable; seeds the incumbent.  An
        infeasible warm start raises InfeasibleWarmStartError.

    Returns
    -------
    Solution whose incumbent objective never exceeds the warm-start
    objective, with status OPTIMAL only once the bound gap closed.
    """
    config = config or SolverConfig()
    int_idx = np.array(model.integer_indices(), dtype=np.int64)
    if int_idx.size == 0:
        raise ValueError("model has no integer variables; use solve_lp_simplex")

    A, b, senses = model.dense_matrix()
    c = model.objective_vector()
    lb0, ub0 = model.bounds_arrays()

    inc_val = INF
    inc_x = None
    trace = []
    if warm_start is not None:
        ws = np.asarray(warm_start, dtype=float)
        report = check_feasible(model, ws, tol=config.feas_tol * 10)
        frac = np.abs(ws[int_idx] - np.round(ws[int_idx]))
        if not report.feasible or frac.max(initial=0.0) > config.int_tol:
            raise InfeasibleWarmStartError(
                f"warm start infeasible (worst violation {report.worst():.3g})")
        inc_x = ws
        inc_val = float(c @ ws)
        trace.append((0, inc_val))

    rows = _partition_rows(model)
    var_rows = {}
    for ridx, members in enumerate(rows):
        for j in members:
            var_rows.setdefault(int(j), []).append(ridx)

    start = time.monotonic()
    counter = 0
    heap = [(-INF, counter, lb0, ub0)]
    nodes = 0
    best_bound = -INF
    timed_out = False

    def gap_tol():
        if inc_val is INF:
            return config.abs_gap
        return max(config.abs_gap, config.rel_gap * abs(inc_val))

    while heap:
        bound, _, lbv, ubv = heapq.heappop(heap)
        best_bound = bound  # best-first: bounds pop in nondecreasing order
        if inc_val - bound <= gap_tol():
            heap.clear()
            break
        if time.monotonic() - start > config.time_limit:
            timed_out = True
            break
        nodes += 1
        status, x, obj = simplex.solve_dense_lp(
            A, b, senses, c, lbv, ubv, feas_tol=config.feas_tol)
        if status == simplex.INFEASIBLE:
            continue
        if status == simplex.UNBOUNDED:
            return Solution(SolveStatus.UNBOUNDED, objective=-INF,
                            best_bound=-INF, node_count=nodes, trace=trace)
        obj = max(obj, bound)
        if obj >= inc_val - gap_tol():
            continue
        xi = x[int_idx]
        frac = np.abs(xi - np.round(xi))
        if frac.max(initial=0.0) <= config.int_tol:
            inc_val = obj
            inc_x = x
            trace.append((nodes, inc_val))
            continue
        # branch: most fractional, ties by lowest variable id
        score = np.minimum(frac, 1.0 - frac)
        j = int(int_idx[int(np.argmax(score))])
        v = x[j]
        for lo, hi in ((lbv[j], math.floor(v)), (math.ceil(v), ubv[j])):
            clb, cub = lbv.copy(), ubv.copy()
            clb[j], cub[j] = max(clb[j], lo), min(cub[j], hi)
            if clb[j] > cub[j]:
                continue
            if clb[j] == cub[j] and not _propagate(clb, cub, [j], var_rows, rows):
                continue
            counter += 1
            heapq.heappush(heap, (obj, counter, clb, cub))

    if heap:
        best_bound = min(best_bound, heap[0][0])
    elif not timed_out and inc_x is not None:
        # search space exhausted: the incumbent is proved optimal
        best_bound = inc_val

    if inc_x is None:
        if timed_out:
            return Solution(SolveStatus.TIME_LIMIT, best_bound=best_bound,
                            node_count=nodes, trace=trace)
        return Solution(SolveStatus.INFEASIBLE, node_count=nodes, trace=trace)

    gap = max(0.0, inc_val - best_bound)
    if timed_out and gap > gap_tol():
        status = SolveStatus.TIME_LIMIT
    elif gap <= gap_tol():
        status = SolveStatus.OPTIMAL
    else:
        status = SolveStatus.FEASIBLE
    return Solution(status, inc_x, inc_val, best_bound=best_bound, gap=gap,
                    node_count=nodes, trace=trace)
