"""LP-based training-data selection over per-leaf clusters.

Per cluster, a small LP per point decides whether that point lies in the
convex hull of the remaining cluster points (optionally within an
eps'-band): maximize b subject to

    -eps' <= b x_j - sum_{i != j} lam_i x_i <= eps',  sum lam_i = b,
    lam >= 0, b <= 1.

With eps' = 0 the optimum is binary: b = 1 exactly when the point is
expressible as a convex combination of the others.  The per-point LPs
decompose the cluster-level LP, so they can be solved independently on a
process pool with bitwise-identical results.

The partition of a cluster: inside points (b = 1), heavy expressers
(some weight >= 1/(d+1), the Caratheodory threshold), and the rest.  The
selection rule keeps the non-inside points when nearly everything is
inside, otherwise the heavy expressers, topped up with the points
nearest to the warm-start tree's boundary hyperplanes.

A balanced variant trades hull coverage against the number of selected
points via the relaxation of the full 0-1 selection program, finishing
with an exact solve over the ambiguous points when few enough.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import cluster_by_leaf
from .milp import (
    BINARY,
    CONTINUOUS,
    EQ,
    GE,
    LE,
    INF,
    MilpModel,
    SolverConfig,
    SolveStatus,
    solve_bnb,
    solve_lp_simplex,
)
from .milp.simplex import OPTIMAL, solve_dense_lp


class SelectionError(ValueError):
    pass


@dataclass(frozen=True)
class SelectionParams:
    eps_prime: float = 0.0
    beta1: float = 0.3
    beta2: float = 0.05
    parallel: bool = False
    workers: int | None = None
    seed: int = 0
    balanced: bool = False
    balanced_mip_cap: int = 50

    def __post_init__(self):
        if not 0.0 <= self.eps_prime <= 0.5:
            raise SelectionError("eps_prime must lie in [0, 0.5]")
        for b in (self.beta1, self.beta2):
            if not 0.0 < b <= 1.0:
                raise SelectionError("beta thresholds must lie in (0, 1]")

    def validate(self, d):
        if self.beta2 >= (d + 1) * (1.0 - self.beta1):
            raise SelectionError(
                f"need beta2 < (d+1)(1-beta1); got beta2={self.beta2}, "
                f"beta1={self.beta1}, d={d}")


@dataclass
class SelectionResult:
    cluster_indices: np.ndarray   # dataset row ids of the cluster
    b: np.ndarray                 # per-point LP optima
    weights: np.ndarray           # (k, k) convex-combination weights
    inside: np.ndarray            # local positions with b rounded to 1
    heavy: np.ndarray             # local positions of heavy expressers
    rest: np.ndarray              # remaining local positions
    selected: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    branch: str = ""
    leaf: int = -1
    label: int = -1

    @property
    def size(self):
        return len(self.cluster_indices)


def _point_lp_arrays(points, eps_prime):
    """Shared constraint matrix for the per-point LPs of one cluster.

    Variables are [b, lam_1 .. lam_k]; lam_jj is pinned to zero by its
    upper bound per point.  Only the b column changes between points.
    """
    k, d = points.shape
    if eps_prime == 0.0:
        A = np.zeros((d + 2, k + 1))
        A[:d, 1:] = points.T
        A[d, 0] = -1.0
        A[d, 1:] = 1.0
        A[d + 1, 0] = 1.0
        b = np.zeros(d + 2)
        b[d + 1] = 1.0
        senses = np.array([1] * (d + 1) + [0], dtype=np.int8)
    else:
        A = np.zeros((2 * d + 2, k + 1))
        A[:d, 1:] = -points.T
        A[d:2 * d, 1:] = points.T
        A[2 * d, 0] = -1.0
        A[2 * d, 1:] = 1.0
        A[2 * d + 1, 0] = 1.0
        b = np.concatenate([np.full(2 * d, eps_prime), [0.0, 1.0]])
        senses = np.array([0] * (2 * d) + [1, 0], dtype=np.int8)
    c = np.zeros(k + 1)
    c[0] = -1.0
    return A, b, senses, c


def _solve_point(A, b, senses, c, points, j, eps_prime, ub):
    k, d = points.shape
    if eps_prime == 0.0:
        A[:d, 0] = -points[j]
    else:
        A[:d, 0] = points[j]
        A[d:2 * d, 0] = -points[j]
    ub[1 + j] = 0.0
    status, x, _ = solve_dense_lp(A, b, senses, c, np.zeros(k + 1), ub)
    ub[1 + j] = INF
    if status != OPTIMAL:  # b = lam = 0 is always feasible
        raise SelectionError(f"per-point selection LP came back {status}")
    return float(x[0]), x[1:]


def selection_lp_point(points, j, eps_prime=0.0):
    """Hull-membership LP for one point against the rest of its cluster.

    Returns (b, lam) where lam is aligned with the cluster rows
    (lam[j] = 0).  The model has d+2 rows when eps_prime = 0 (the band
    constraints double when eps_prime > 0) and one variable per cluster
    point, and the optimum returned is a vertex.
    """
    points = np.asarray(points, dtype=float)
    if points.shape[0] < 2:
        raise SelectionError("cluster must have at least two points")
    A, b, senses, c = _point_lp_arrays(points, eps_prime)
    ub = np.full(points.shape[0] + 1, INF)
    return _solve_point(A, b, senses, c, points, j, eps_prime, ub)


_POOL_STATE = {}


def _pool_init(points, eps_prime):
    _POOL_STATE["points"] = points
    _POOL_STATE["eps_prime"] = eps_prime
    _POOL_STATE["arrays"] = _point_lp_arrays(points, eps_prime)
    _POOL_STATE["ub"] = np.full(points.shape[0] + 1, INF)


def _pool_chunk(js):
    points = _POOL_STATE["points"]
    eps_prime = _POOL_STATE["eps_prime"]
    A, b, senses, c = _POOL_STATE["arrays"]
    ub = _POOL_STATE["ub"]
    out = []
    for j in js:
        out.append((j, *_solve_point(A, b, senses, c, points, j, eps_prime, ub)))
    return out


def selection_lp_cluster(points, eps_prime=0.0, parallel=False, workers=None):
    """Solve the per-point LP for every cluster member.

    Returns (b, lam) with lam[j] the weights expressing point j.  Results
    are collected by point index, so parallel and sequential runs agree
    bitwise.
    """
    points = np.asarray(points, dtype=float)
    k = points.shape[0]
    if k == 0:
        raise SelectionError("cluster must be nonempty")
    if k == 1:
        return np.zeros(1), np.zeros((1, 1))
    bvec = np.empty(k)
    lam = np.empty((k, k))
    if parallel and k > 8:
        workers = workers or min(8, os.cpu_count() or 1)
        chunk = max(1, math.ceil(k / (workers * 4)))
        chunks = [list(range(s, min(s + chunk, k))) for s in range(0, k, chunk)]
        with ProcessPoolExecutor(max_workers=workers, initializer=_pool_init,
                                 initargs=(points, eps_prime)) as pool:
            for res in pool.map(_pool_chunk, chunks):
                for j, bj, row in res:
                    bvec[j] = bj
                    lam[j] = row
    else:
        A, b, senses, c = _point_lp_arrays(points, eps_prime)
        ub = np.full(k + 1, INF)
        for j in range(k):
            bvec[j], lam[j] = _solve_point(A, b, senses, c, points, j, eps_prime, ub)
    return bvec, lam


def inside_mask(bvec, eps_prime):
    """Rounding rule: floor(b) support when eps' > 0; b is exactly binary
    at eps' = 0 so any interior threshold works."""
    if eps_prime > 0.0:
        return bvec >= 1.0 - 1e-9
    return bvec > 0.5


def partition_sets(cluster_indices, bvec, lam, d, eps_prime=0.0):
    """Split a cluster into inside points, heavy expressers, and the rest.

    Heavy expressers carry weight >= 1/(d+1) in some inside point's convex
    combination (inclusive at the threshold); the bound |heavy| <=
    (d+1) * |inside| follows from each inside row having at most d+1 such
    weights.
    """
    cluster_indices = np.asarray(cluster_indices, dtype=np.int64)
    k = len(cluster_indices)
    ins = inside_mask(np.asarray(bvec, dtype=float), eps_prime)
    thresh = 1.0 / (d + 1) - 1e-12
    heavy = np.zeros(k, dtype=bool)
    lam = np.asarray(lam, dtype=float)
    if ins.any():
        heavy = (lam[ins] >= thresh).any(axis=0)
    heavy &= ~ins
    rest = ~ins & ~heavy
    return SelectionResult(cluster_indices, np.asarray(bvec, dtype=float), lam,
                           np.flatnonzero(ins), np.flatnonzero(heavy),
                           np.flatnonzero(rest))


def hyperplane_distance_select(points, hyperplanes, count, seed=0):
    """Indices of the `count` points nearest to any of the hyperplanes.

    Distance is Euclidean point-to-hyperplane |<h,x> - g| / |h|_2,
    minimized over the supplied set; all-zero hyperplanes are skipped.
    Sorting is ascending and stable with ties broken by index.  If every
    hyperplane is degenerate, a seeded random sample is returned instead.
    """
    points = np.asarray(points, dtype=float)
    k = points.shape[0]
    count = max(0, min(int(count), k))
    if count == 0:
        return np.empty(0, dtype=np.int64)
    dists = np.full(k, INF)
    usable = False
    for h, g in hyperplanes:
        h = np.asarray(h, dtype=float)
        norm = float(np.linalg.norm(h))
        if norm <= 0.0:
            continue
        usable = True
        dists = np.minimum(dists, np.abs(points @ h - g) / norm)
    if not usable:
        rng = np.random.default_rng(seed)
        return np.sort(rng.choice(k, size=count, replace=False)).astype(np.int64)
    order = np.lexsort((np.arange(k), dists))
    return order[:count].astype(np.int64)


def _path_hyperplanes(tree, leaf):
    """Hyperplanes along the root-to-leaf path: the region boundaries."""
    planes = []
    node = leaf
    while node > 1:
        node //= 2
        if node not in tree.cat_rules:
            planes.append((tree.coeffs[node - 1], float(tree.biases[node - 1])))
    return planes


def select_cluster(dataset, cluster, params: SelectionParams, tree):
    """One cluster's selection: hull LPs, partition, then the three-way rule.

    Branches: keep every non-inside point when the inside share reaches
    1 - beta1; else keep the heavy expressers when they exceed the beta2
    budget; else top the heavy expressers up to the budget with the
    points nearest to the leaf's boundary hyperplanes.
    """
    params.validate(dataset.d)
    pts = dataset.points[cluster.indices]
    k = pts.shape[0]
    if k == 1:
        res = SelectionResult(cluster.indices, np.zeros(1), np.zeros((1, 1)),
                              np.empty(0, dtype=np.int64),
                              np.empty(0, dtype=np.int64), np.array([0]))
    else:
        bvec, lam = selection_lp_cluster(pts, params.eps_prime,
                                         parallel=params.parallel,
                                         workers=params.workers)
        res = partition_sets(cluster.indices, bvec, lam, dataset.d,
                             params.eps_prime)
    n_inside = len(res.inside)
    if n_inside / k >= 1.0 - params.beta1:
        local = np.setdiff1d(np.arange(k), res.inside)
        res.branch = "outside-hull"
    elif len(res.heavy) > params.beta2 * k:
        local = res.heavy
        res.branch = "heavy"
    else:
        budget = max(0, int(math.floor(params.beta2 * k)) - len(res.heavy))
        planes = _path_hyperplanes(tree, cluster.leaf)
        near = hyperplane_distance_select(pts[res.rest], planes, budget,
                                          seed=params.seed)
        local = np.concatenate([res.heavy, res.rest[near]])
        res.branch = "heavy+near-boundary"
    res.selected = np.sort(cluster.indices[np.asarray(local, dtype=np.int64)])
    return res


# -- balanced variant ------------------------------------------------------


@dataclass
class BalancedResult:
    selected: np.ndarray      # local cluster positions with a = 1
    covered: np.ndarray       # local positions with b = 1
    exact: bool               # False when the greedy fallback was used
    objective: float


def _balance_model(points, eps_prime, binary, fixed_b):
    k, d = points.shape
    mod = MilpModel("balanced-selection")
    kind = BINARY if binary else CONTINUOUS
    a = [mod.add_variable(f"a_{j}", kind, 0.0, 1.0, obj=1.0) for j in range(k)]
    b = []
    for j in range(k):
        fixed = fixed_b.get(j)
        bj = mod.add_variable(f"b_{j}", kind, 0.0, 1.0, obj=-1.0)
        if fixed is not None:
            mod.variables[bj].lb = mod.variables[bj].ub = float(fixed)
        b.append(bj)
    lam = {}
    for j in range(k):
        for i in range(k):
            if i != j:
                lam[j, i] = mod.add_variable(f"lam_{j}_{i}", CONTINUOUS, 0.0, 1.0)
    for j in range(k):
        for r in range(d):
            row = {b[j]: points[j, r]}
            for i in range(k):
                if i != j and points[i, r] != 0.0:
                    row[lam[j, i]] = -points[i, r]
            if eps_prime == 0.0:
                mod.add_constraint(row, EQ, 0.0, name=f"expr_{j}_{r}")
            else:
                mod.add_constraint(row, LE, eps_prime, name=f"expr_hi_{j}_{r}")
                mod.add_constraint({v: -cc for v, cc in row.items()}, LE,
                                   eps_prime, name=f"expr_lo_{j}_{r}")
        row = {lam[j, i]: 1.0 for i in range(k) if i != j}
        row[b[j]] = -1.0
        mod.add_constraint(row, EQ, 0.0, name=f"mass_{j}")
        for i in range(k):
            if i != j:
                mod.add_constraint({lam[j, i]: 1.0, a[i]: -1.0}, LE, 0.0,
                                   name=f"use_{j}_{i}")
        mod.add_constraint({a[j]: 1.0, b[j]: 1.0}, LE, 1.0, name=f"excl_{j}")
    return mod, a, b


def balanced_selection(points, eps_prime=0.0, mip_cap=50):
    """Trade hull coverage against selection size (objective sum(b - a)).

    Solves the continuous relaxation first; points with relaxed coverage
    exactly 0 or 1 are fixed, and the remaining ambiguous points go
    through the exact 0-1 program unless they exceed `mip_cap`, in which
    case the relaxed selector values are rounded greedily.
    """
    points = np.asarray(points, dtype=float)
    k = points.shape[0]
    if k < 2:
        raise SelectionError("balanced selection needs at least two points")
    relax, a_ids, b_ids = _balance_model(points, eps_prime, binary=False, fixed_b={})
    sol = solve_lp_simplex(relax)
    if sol.status is not SolveStatus.OPTIMAL:
        raise SelectionError(f"balanced relaxation came back {sol.status}")
    a_rel = sol.values[a_ids]
    b_rel = sol.values[b_ids]
    tol = 1e-7
    fixed = {}
    ambiguous = []
    for j in range(k):
        if b_rel[j] <= tol:
            fixed[j] = 0
        elif b_rel[j] >= 1.0 - tol:
            fixed[j] = 1
        else:
            ambiguous.append(j)
    if len(ambiguous) > mip_cap:
        chosen = np.flatnonzero(a_rel >= 0.5)
        covered = np.flatnonzero(b_rel >= 1.0 - tol)
        return BalancedResult(chosen, covered, False,
                              float(len(chosen) - len(covered)))
    mip, a_ids, b_ids = _balance_model(points, eps_prime, binary=True, fixed_b=fixed)
    msol = solve_bnb(mip, SolverConfig(time_limit=300.0))
    if not msol.has_values:
        raise SelectionError(f"balanced selection MIP came back {msol.status}")
    chosen = np.flatnonzero(msol.values[a_ids] > 0.5)
    covered = np.flatnonzero(msol.values[b_ids] > 0.5)
    return BalancedResult(chosen, covered, True, float(msol.objective))


# -- whole-dataset composition ---------------------------------------------


@dataclass
class SelectionSummary:
    reduced_indices: np.ndarray
    misclassified: np.ndarray
    per_cluster: list  # SelectionResult per (leaf, class) cluster
    n_total: int

    @property
    def fraction(self):
        return len(self.reduced_indices) / max(1, self.n_total)

    def stats(self):
        return [{
            "leaf": int(r.leaf),
            "label": int(r.label),
            "size": int(r.size),
            "inside": int(len(r.inside)),
            "heavy": int(len(r.heavy)),
            "rest": int(len(r.rest)),
            "selected": int(len(r.selected)),
            "branch": r.branch,
        } for r in self.per_cluster]


def select_all(dataset, tree, params: SelectionParams):
    """Union of per-cluster selections plus every misclassified point.

    Clusters are the correctly classified points per (leaf, class) pair
    under `tree`; misclassified points are always retained so retraining
    can still fix them.  Original dataset indices are preserved.
    """
    params.validate(dataset.d)
    clusters, missed = cluster_by_leaf(dataset, tree)
    results = []
    pieces = [missed]
    for cluster in clusters:
        if params.balanced and len(cluster.indices) >= 2:
            bal = balanced_selection(dataset.points[cluster.indices],
                                     params.eps_prime, params.balanced_mip_cap)
            res = SelectionResult(cluster.indices, np.zeros(len(cluster.indices)),
                                  np.zeros((0, 0)), np.empty(0, dtype=np.int64),
                                  np.empty(0, dtype=np.int64),
                                  np.arange(len(cluster.indices)))
            res.selected = np.sort(cluster.indices[bal.selected])
            res.branch = "balanced" if bal.exact else "balanced-greedy"
        else:
            res = select_cluster(dataset, cluster, params, tree)
        res.leaf, res.label = cluster.leaf, cluster.label
        results.append(res)
        pieces.append(res.selected)
    reduced = np.unique(np.concatenate(pieces)) if pieces else np.empty(0, np.int64)
    return SelectionSummary(reduced.astype(np.int64), missed, results, dataset.n)
