"""Dense two-phase simplex with explicit variable bounds.

The tableau treats general bounds directly: nonbasic variables may sit at
their lower or upper bound, and a pivot step may end in a bound flip
instead of a basis change.  Pricing is Dantzig (most negative effective
reduced cost) with largest-pivot tie-breaking while the objective makes
progress, switching permanently to Bland's rule (smallest eligible index
enters, smallest blocking basic index leaves) once the iteration stalls,
which guarantees termination.  The tableau is refactorized from pristine
data at fixed intervals to cap floating-point error accumulation.

Returned solutions are basic, i.e. vertices of the feasible polyhedron.
The data-selection pipeline relies on that property.
"""

import math

import numpy as np

from .model import (
    INF,
    MilpModel,
    Solution,
    SolveStatus,
    SolverConfig,
)

_PIVOT_TOL = 1e-9
_MAX_ITER = 200_000

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class SimplexError(RuntimeError):
    """Iteration cap exceeded or internal numerical failure."""


def solve_dense_lp(A, b, senses, c, lb, ub, feas_tol=1e-7, max_iter=_MAX_ITER):
    """Solve min c.x s.t. A x (<=,==,>=) b, lb <= x <= ub.

    Parameters
    ----------
    A : (m, n) array
    b : (m,) array
    senses : (m,) int8 array, 0 for <=, 1 for ==, 2 for >=
    c, lb, ub : (n,) arrays; lb may be -inf, ub may be +inf

    Returns
    -------
    (status, x, objective) where status is one of the module constants
    and x is None unless status == OPTIMAL.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    m, n = A.shape if A.ndim == 2 else (0, len(c))
    if np.any(lb > ub + 1e-12):
        return INFEASIBLE, None, INF

    # --- variable transform: every column becomes x' in [0, u'] ----------
    fin_lb = np.isfinite(lb)
    fin_ub = np.isfinite(ub)
    flip = ~fin_lb & fin_ub          # x = ub - x'
    free = ~fin_lb & ~fin_ub         # x = x+ - x-
    shift = np.where(fin_lb, lb, 0.0)
    off = np.where(flip, ub, shift)  # constant offset per original column

    A2 = A.copy() if m else np.zeros((0, n))
    c2 = c.copy()
    if flip.any():
        if m:
            A2[:, flip] *= -1.0
        c2[flip] *= -1.0
    uvec = np.where(fin_lb & fin_ub, ub - lb, INF)
    uvec = np.where(flip, INF, uvec)
    free_idx = np.flatnonzero(free)
    if free_idx.size:
        uvec[free] = INF
        A2 = np.hstack([A2, -A[:, free_idx]]) if m else A2
        c2 = np.concatenate([c2, -c[free_idx]])
        uvec = np.concatenate([uvec, np.full(free_idx.size, INF)])
    n2 = c2.size
    rhs = b - (A @ off if m else 0.0)

    # --- rows to equalities with slack columns ----------------------------
    # senses: 0 '<=' slack +1, 2 '>=' slack -1, 1 '==' none
    slack_rows = np.flatnonzero(senses != 1)
    ns = slack_rows.size
    S = np.zeros((m, ns))
    for k, r in enumerate(slack_rows):
        S[r, k] = 1.0 if senses[r] == 0 else -1.0
    T = np.hstack([A2, S]) if m else np.zeros((0, n2))
    uvec = np.concatenate([uvec, np.full(ns, INF)])
    cost = np.concatenate([c2, np.zeros(ns)])

    # make rhs nonnegative; also reorient zero-rhs >= rows so their slack
    # (coefficient +1 after negation) can seed the basis without artificials
    neg = (rhs < 0) | ((rhs == 0) & (senses == 2))
    if neg.any():
        T[neg] *= -1.0
        rhs = np.where(neg, -rhs, rhs)

    # initial basis: the slack column where its coefficient stayed +1
    basis = np.full(m, -1, dtype=np.int64)
    for k, r in enumerate(slack_rows):
        if T[r, n2 + k] > 0.0:
            basis[r] = n2 + k
    art_rows = np.flatnonzero(basis < 0)
    na = art_rows.size
    if na:
        Art = np.zeros((m, na))
        for k, r in enumerate(art_rows):
            Art[r, k] = 1.0
            basis[r] = n2 + ns + k
        T = np.hstack([T, Art])
        uvec = np.concatenate([uvec, np.full(na, INF)])
        cost = np.concatenate([cost, np.zeros(na)])
    K = T.shape[1]
    art_mask = np.zeros(K, dtype=bool)
    art_mask[n2 + ns:] = True

    beta = rhs.copy()
    at_upper = np.zeros(K, dtype=bool)
    in_basis = np.zeros(K, dtype=bool)
    in_basis[basis] = True

    state = _TableauState(T, beta, basis, uvec, at_upper, in_basis,
                          T.copy(), rhs.copy())

    # --- phase 1 -----------------------------------------------------------
    if na:
        cb = np.zeros(m)
        cb[art_rows] = 1.0
        z1 = np.zeros(K)
        z1[art_mask] = 1.0
        z1 -= cb @ T
        z1[basis] = 0.0
        phase1_cost = np.zeros(K)
        phase1_cost[art_mask] = 1.0
        status = _pivot_loop(state, z1, np.zeros(K, dtype=bool), max_iter,
                             phase1_cost)
        if status == UNBOUNDED:
            raise SimplexError("phase-1 objective diverged")
        p1 = float(state.beta[art_mask[state.basis]].sum())
        if p1 > feas_tol * (1.0 + float(np.abs(rhs).max(initial=0.0))):
            return INFEASIBLE, None, INF
        _drive_out_artificials(state, art_mask)
        # artificials are all nonbasic (or their rows dropped): drop columns
        keep_cols = n2 + ns
        state.T = np.ascontiguousarray(state.T[:, :keep_cols])
        state.T0 = np.ascontiguousarray(state.T0[:, :keep_cols])
        state.at_upper = state.at_upper[:keep_cols]
        state.in_basis = state.in_basis[:keep_cols]
        state.uvec = uvec = uvec[:keep_cols]
        cost = cost[:keep_cols]

    # --- phase 2 -----------------------------------------------------------
    z = cost.copy()
    z -= cost[state.basis] @ state.T
    z[state.basis] = 0.0
    banned = uvec <= 0.0
    status = _pivot_loop(state, z, banned, max_iter, cost)
    if status == UNBOUNDED:
        return UNBOUNDED, None, -INF

    # --- extract values ----------------------------------------------------
    x2 = np.where(state.at_upper & np.isfinite(state.uvec), state.uvec, 0.0)
    x2[state.basis] = np.clip(state.beta, 0.0, state.uvec[state.basis])
    x = np.empty(n)
    xs = x2[:n]
    x[fin_lb] = lb[fin_lb] + xs[fin_lb]
    x[flip] = ub[flip] - xs[flip]
    if free_idx.size:
        # free columns were appended right after the n structural ones
        x[free_idx] = xs[free_idx] - x2[n: n + free_idx.size]
    return OPTIMAL, x, float(c @ x)


class _TableauState:
    __slots__ = ("T", "beta", "basis", "uvec", "at_upper", "in_basis",
                 "T0", "rhs0")

    def __init__(self, T, beta, basis, uvec, at_upper, in_basis, T0, rhs0):
        self.T = T
        self.beta = beta
        self.basis = basis
        self.uvec = uvec
        self.at_upper = at_upper
        self.in_basis = in_basis
        self.T0 = T0      # pristine standard-form matrix, for refactorization
        self.rhs0 = rhs0

    def refactor(self, z, cost):
        """Recompute tableau, basic values, and reduced costs from pristine
        data, clearing accumulated floating-point error.  Returns False if
        the basis matrix is too ill-conditioned to factor."""
        B = self.T0[:, self.basis]
        try:
            Tnew = np.linalg.solve(B, self.T0)
            if not np.all(np.isfinite(Tnew)):
                return False
            rhs_eff = self.rhs0.copy()
            upper = np.flatnonzero(self.at_upper & ~self.in_basis
                                   & np.isfinite(self.uvec))
            if upper.size:
                rhs_eff -= self.T0[:, upper] @ self.uvec[upper]
            beta_new = np.linalg.solve(B, rhs_eff)
        except np.linalg.LinAlgError:
            return False
        self.T[...] = Tnew
        self.beta[...] = beta_new
        if z is not None and cost is not None:
            self.refresh_costs(z, cost)
        return True

    def refresh_costs(self, z, cost):
        """Reduced costs recomputed from the current tableau (cheap)."""
        z[...] = cost - cost[self.basis] @ self.T
        z[self.basis] = 0.0


_REFACTOR_EVERY = 1000
_STALL_LIMIT = 400


def _pivot_loop(state, z, banned, max_iter, cost):
    """Pivot until optimal or unbounded; z is updated in place.

    Dantzig pricing with largest-pivot tie-breaks while progressing;
    permanent Bland mode after _STALL_LIMIT degenerate steps.
    """
    uvec = state.uvec
    m = state.T.shape[0]
    bland = False
    stall = 0
    for it in range(max_iter):
        if it and it % _REFACTOR_EVERY == 0:
            state.refactor(z, cost)
        red = np.where(state.at_upper, -z, z)
        elig = (red < -_PIVOT_TOL) & ~banned & ~state.in_basis & (uvec > 0.0)
        if not elig.any():
            # confirm optimality against freshly recomputed reduced costs
            state.refresh_costs(z, cost)
            red = np.where(state.at_upper, -z, z)
            elig = (red < -10 * _PIVOT_TOL) & ~banned & ~state.in_basis \
                & (uvec > 0.0)
            if not elig.any():
                return OPTIMAL
        if bland:
            jin = int(np.argmax(elig))  # smallest eligible index
        else:
            cand = np.where(elig, red, 0.0)
            jin = int(np.argmin(cand))  # most negative effective cost
        sigma = -1.0 if state.at_upper[jin] else 1.0
        d = sigma * state.T[:, jin]
        beta = state.beta
        ub_bas = uvec[state.basis] if m else np.empty(0)
        t_rows = np.full(m, INF)
        pos = d > _PIVOT_TOL
        if pos.any():
            t_rows[pos] = np.maximum(beta[pos], 0.0) / d[pos]
        negd = (d < -_PIVOT_TOL) & np.isfinite(ub_bas)
        if negd.any():
            t_rows[negd] = np.maximum(ub_bas[negd] - beta[negd], 0.0) / (-d[negd])
        t_row_min = float(t_rows.min()) if m else INF
        t_own = uvec[jin]
        if t_row_min >= INF and not math.isfinite(t_own):
            return UNBOUNDED
        if t_own < t_row_min:
            # bound flip, no basis change; strict objective improvement
            beta -= t_own * d
            state.at_upper[jin] = not state.at_upper[jin]
            stall = 0
            continue
        tstar = t_row_min
        rows = np.flatnonzero(t_rows <= tstar * (1 + 1e-10) + 1e-12)
        if bland:
            r = rows[np.argmin(state.basis[rows])]  # smallest leaving var index
        else:
            r = rows[np.argmax(np.abs(d[rows]))]    # most stable pivot
        leaves_at_upper = d[r] < 0.0
        _pivot(state, z, r, jin, tstar, sigma, leaves_at_upper)
        if tstar <= 1e-12:
            stall += 1
            if stall > _STALL_LIMIT and not bland:
                bland = True
                state.refactor(z, cost)
        else:
            stall = 0
    raise SimplexError("simplex iteration limit exceeded")


def _pivot(state, z, r, jin, tstar, sigma, leaves_at_upper):
    T, beta, basis = state.T, state.beta, state.basis
    jout = basis[r]
    xin = tstar if sigma > 0 else state.uvec[jin] - tstar
    beta -= tstar * (sigma * T[:, jin])
    piv = T[r, jin]
    Tr = T[r] / piv
    col = T[:, jin].copy()
    col[r] = 0.0
    T -= np.outer(col, Tr)
    T[r] = Tr
    if z is not None:
        z -= z[jin] * Tr
        z[jin] = 0.0
    beta[r] = xin
    basis[r] = jin
    state.in_basis[jout] = False
    state.in_basis[jin] = True
    state.at_upper[jin] = False
    state.at_upper[jout] = bool(leaves_at_upper and math.isfinite(state.uvec[jout]))


def _drive_out_artificials(state, art_mask):
    """Pivot basic artificials (at value ~0) out; drop redundant rows."""
    T, basis = state.T, state.basis
    drop = []
    art_idx = np.flatnonzero(art_mask)
    for r in range(T.shape[0]):
        if basis[r] not in art_idx:
            continue
        row = T[r]
        cand = np.flatnonzero(
            (np.abs(row) > _PIVOT_TOL) & ~art_mask & ~state.in_basis & ~state.at_upper
        )
        if cand.size:
            _pivot(state, None, r, int(cand[0]), 0.0, 1.0, False)
            continue
        cand_up = np.flatnonzero(
            (np.abs(row) > _PIVOT_TOL) & ~art_mask & ~state.in_basis & state.at_upper
        )
        if cand_up.size:
            jin = int(cand_up[0])
            # entering keeps its current value u_j; artificial leaves at 0
            _pivot(state, None, r, jin, 0.0, -1.0, False)
            state.beta[r] = state.uvec[jin]
            continue
        drop.append(r)
    if drop:
        keep = np.setdiff1d(np.arange(T.shape[0]), np.array(drop))
        old_basis = basis[drop]
        state.T = state.T[keep]
        state.beta = state.beta[keep]
        state.basis = state.basis[keep]
        state.T0 = state.T0[keep]
        state.rhs0 = state.rhs0[keep]
        state.in_basis[old_basis] = False


def solve_lp_simplex(model: MilpModel, config: SolverConfig | None = None,
                     lb_override=None, ub_override=None) -> Solution:
    """Solve the LP given by `model` (integrality ignored) to a basic optimum.

    Never raises on infeasible or unbounded inputs; the status carries the
    outcome.  Optional bound overrides replace the model bounds wholesale
    (used by branch-and-bound nodes).
    """
    config = config or SolverConfig()
    A, b, senses = model.dense_matrix()
    c = model.objective_vector()
    lb, ub = model.bounds_arrays()
    if lb_override is not None:
        lb = np.asarray(lb_override, dtype=float)
    if ub_override is not None:
        ub = np.asarray(ub_override, dtype=float)
    status, x, obj = solve_dense_lp(A, b, senses, c, lb, ub, feas_tol=config.feas_tol)
    if status == OPTIMAL:
        return Solution(SolveStatus.OPTIMAL, x, obj, best_bound=obj, gap=0.0)
    if status == INFEASIBLE:
        return Solution(SolveStatus.INFEASIBLE)
    return Solution(SolveStatus.UNBOUNDED, objective=-INF, best_bound=-INF)
