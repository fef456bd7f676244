import itertools

import numpy as np
import pytest

from odtree.milp import (
    CONTINUOUS,
    EQ,
    GE,
    LE,
    INF,
    MilpModel,
    SolveStatus,
    solve_lp_simplex,
)
from odtree.milp.simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, solve_dense_lp


def _vertex_enumeration_optimum(A, b, senses, c, lb, ub, tol=1e-9):
    """Oracle: enumerate all intersections of n active constraints (rows
    and bounds) and take the best feasible one."""
    m, n = A.shape
    rows = [(A[i], b[i]) for i in range(m)]
    for j in range(n):
        ej = np.zeros(n)
        ej[j] = 1.0
        if np.isfinite(lb[j]):
            rows.append((ej, lb[j]))
        if np.isfinite(ub[j]):
            rows.append((ej, ub[j]))
    best = None
    for combo in itertools.combinations(range(len(rows)), n):
        M = np.array([rows[i][0] for i in combo])
        r = np.array([rows[i][1] for i in combo])
        if abs(np.linalg.det(M)) < tol:
            continue
        x = np.linalg.solve(M, r)
        lhs = A @ x
        ok = np.all(x >= lb - 1e-7) and np.all(x <= ub + 1e-7)
        for i in range(m):
            if senses[i] == 0:
                ok = ok and lhs[i] <= b[i] + 1e-7
            elif senses[i] == 2:
                ok = ok and lhs[i] >= b[i] - 1e-7
            else:
                ok = ok and abs(lhs[i] - b[i]) <= 1e-7
        if ok:
            v = float(c @ x)
            best = v if best is None else min(best, v)
    return best


class TestExamples:
    def test_min_above_floor(self):
        m = MilpModel()
        x = m.add_variable("x", CONTINUOUS, 0.0, obj=1.0)
        m.add_constraint({x: 1.0}, GE, 3.0)
        sol = solve_lp_simplex(m)
        assert sol.status is SolveStatus.OPTIMAL
        assert sol.objective == pytest.approx(3.0)
        assert sol.values[x] == pytest.approx(3.0)

    def test_bound_active_maximum(self):
        # max b with b tied to a convex weight: optimum pinned at 1
        m = MilpModel()
        b = m.add_variable("b", CONTINUOUS, 0.0, 1.0, obj=-1.0)
        lam = m.add_variable("lam", CONTINUOUS, 0.0, 1.0)
        m.add_constraint({b: 1.0, lam: -1.0}, EQ, 0.0)
        sol = solve_lp_simplex(m)
        assert sol.status is SolveStatus.OPTIMAL
        assert sol.values[b] == pytest.approx(1.0)

    def test_infeasible_status(self):
        m = MilpModel()
        x = m.add_variable("x", CONTINUOUS, 0.0, 1.0)
        m.add_constraint({x: 1.0}, GE, 2.0)
        assert solve_lp_simplex(m).status is SolveStatus.INFEASIBLE

    def test_unbounded_status(self):
        m = MilpModel()
        m.add_variable("x", CONTINUOUS, 0.0, obj=-1.0)
        assert solve_lp_simplex(m).status is SolveStatus.UNBOUNDED


class TestRandomAgainstVertexEnumeration:
    @pytest.mark.parametrize("trial", range(20))
    def test_matches_oracle(self, trial):
        rng = np.random.default_rng(100 + trial)
        m = int(rng.integers(1, 7))
        n = int(rng.integers(1, 7))
        A = np.round(rng.normal(size=(m, n)), 2)
        b = np.round(rng.normal(size=m), 2)
        senses = rng.integers(0, 3, size=m).astype(np.int8)
        c = np.round(rng.normal(size=n), 2)
        lb = np.zeros(n)
        ub = np.full(n, 2.0)  # boxed: vertex enumeration stays finite
        status, x, obj = solve_dense_lp(A, b, senses, c, lb, ub)
        ref = _vertex_enumeration_optimum(A, b, senses, c, lb, ub)
        if ref is None:
            assert status == INFEASIBLE
        else:
            assert status == OPTIMAL
            assert obj == pytest.approx(ref, abs=1e-7)


class TestBasicSolutionProperty:
    @pytest.mark.parametrize("trial", range(10))
    def test_vertex_returned(self, trial):
        rng = np.random.default_rng(300 + trial)
        m = int(rng.integers(1, 6))
        n = int(rng.integers(2, 7))
        A = np.round(rng.normal(size=(m, n)), 2)
        b = np.round(rng.uniform(0.5, 2.0, size=m), 2)
        senses = np.zeros(m, dtype=np.int8)
        c = np.round(rng.normal(size=n), 2)
        lb = np.zeros(n)
        ub = np.ones(n)
        status, x, obj = solve_dense_lp(A, b, senses, c, lb, ub)
        assert status == OPTIMAL
        strict_interior = np.sum((x > lb + 1e-9) & (x < ub - 1e-9))
        assert strict_interior <= m

    def test_selection_shape_lp_is_vertex(self):
        # max b s.t. b x0 = sum lam_i x_i, sum lam = b, b <= 1
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0],
                        [0.5, 0.5]])
        m = MilpModel()
        b = m.add_variable("b", CONTINUOUS, 0.0, INF, obj=-1.0)
        lam = [m.add_variable(f"l{i}", CONTINUOUS) for i in range(4)]
        for r in range(2):
            row = {b: -pts[4][r]}
            for i in range(4):
                row[lam[i]] = pts[i][r]
            m.add_constraint(row, EQ, 0.0)
        m.add_constraint({b: -1.0, **{l: 1.0 for l in lam}}, EQ, 0.0)
        m.add_constraint({b: 1.0}, LE, 1.0)
        sol = solve_lp_simplex(m)
        assert sol.values[b] == pytest.approx(1.0)
        # a vertex uses at most d+1 = 3 expressing weights
        weights = [sol.values[l] for l in lam]
        assert sum(w > 1e-9 for w in weights) <= 3
