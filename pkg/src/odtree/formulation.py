"""Construction of the margin-based training MILP for oblique trees.

The model minimizes

    sum_i c_i  +  alpha1 * sum_{i,b} m_ib  +  alpha2 * sum_b |h_b|_1

over hyperplanes (h_b, g_b), leaf labels u_l, leaf assignments e_il and
misclassification indicators c_i, subject to:

  * label linking rows tying c_i to the predicted label yhat_i,
  * an exact McCormick linearization w_il = u_l * e_il (exact because
    e_il is binary),
  * the signed hyperplane split g_b - <h_b, x_i> = p+_ib - p-_ib with a
    big-M deactivation of the wrong-side part and an eps soft margin
    (slack m_ib) on the active side,
  * a one-leaf-per-point assignment row.

The 1-norm enters through the split h = h+ - h- with both parts
penalized.  Leaf labels may be declared integer or relaxed to the
continuous interval [1, Y]; both give the same optimal value.  Rescaling
(alpha1*M, alpha2*M, M=1, eps/M) produces an equivalent model whose
big-M constant is 1, which is on by default.

Categorical columns get their own binary branching machinery
(`add_categorical`): per branch at most one categorical feature may be
chosen, a value-subset picker routes matching points left, and the
numeric margin rows relax to eps * (e_il - sum_j hcat_bj) so they only
bind on branches that actually split numerically.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .milp import (
    BINARY,
    CONTINUOUS,
    EQ,
    GE,
    INF,
    INTEGER,
    LE,
    MilpModel,
    SolveStatus,
)
from .tree import CategoricalRule, ObliqueTree, ancestor_sets

_TIE_TOL = 1e-9


class FormulationError(ValueError):
    pass


class ExtractionError(RuntimeError):
    """Solver values too fractional to map back onto a tree."""


@dataclass(frozen=True)
class FormulationParams:
    depth: int = 2
    alpha1: float = 1000.0
    alpha2: float = 0.1
    eps: float = 0.01
    big_m: float = 1.0
    relax_u: bool = False
    rescale_to_unit_m: bool = True
    add_cuts: bool = True

    def __post_init__(self):
        if not 1 <= self.depth <= 10:
            raise FormulationError("depth must be in 1..10")
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise FormulationError("alpha penalties must be nonnegative")
        if self.eps <= 0 or self.big_m <= 0:
            raise FormulationError("eps and big_m must be positive")
        if self.eps >= self.big_m:
            raise FormulationError("eps must be smaller than big_m")


def rescale_to_unit_m(params: FormulationParams) -> FormulationParams:
    """Equivalent parameterization with big-M fixed to 1.

    (alpha1, alpha2, M, eps) -> (M*alpha1, M*alpha2, 1, eps/M); solutions
    map by dividing h, g, p and m by M, so objective values and the
    represented trees are unchanged.
    """
    M = params.big_m
    if M == 1.0:
        return params
    return replace(params, alpha1=params.alpha1 * M, alpha2=params.alpha2 * M,
                   big_m=1.0, eps=params.eps / M)


@dataclass
class VarMap:
    """Bijection between model variable ids and their role in the MILP."""
    n: int
    d: int
    num_classes: int
    depth: int
    numeric_cols: tuple
    c: np.ndarray        # (n,)
    e: np.ndarray        # (n, L)
    w: np.ndarray        # (n, L)
    yhat: np.ndarray     # (n,)
    u: np.ndarray        # (L,)
    hp: np.ndarray       # (B, len(numeric_cols))
    hm: np.ndarray
    g: np.ndarray        # (B,)
    pp: np.ndarray       # (n, B)
    pm: np.ndarray
    m: np.ndarray
    ancestors: object
    margin_rows: list    # (row index, branch) for every eps-margin row
    cat_h: dict          # (branch, column) -> id
    cat_s: dict          # (branch, column, code) -> id
    categorical_pending: bool = False

    @property
    def branches(self):
        return range(1, 2 ** self.depth)

    @property
    def leaves(self):
        return range(2 ** self.depth, 2 ** (self.depth + 1))


def build_model(dataset, params: FormulationParams, c_weights=None,
                with_categorical=False):
    """Emit the training MILP for a normalized dataset.

    Returns (model, var_map).  `c_weights` optionally reweights each
    point's misclassification cost (used by iterative retraining).  With
    `with_categorical` the hyperplane rows span numeric columns only and
    `add_categorical` must be called before solving.
    """
    Y = dataset.num_classes
    if Y < 2:
        raise FormulationError("need at least two classes")
    if dataset.categorical_columns and not with_categorical:
        raise FormulationError(
            "categorical columns present; build with with_categorical=True "
            "and call add_categorical")
    params = rescale_to_unit_m(params) if params.rescale_to_unit_m else params
    num_cols = dataset.numeric_columns
    sub = dataset.points[:, num_cols]
    if sub.size and (sub.min() < -1e-9 or sub.max() > 1 + 1e-9):
        raise FormulationError("dataset must be normalized to [0, 1] first")

    n, D = dataset.n, params.depth
    B, L = 2 ** D - 1, 2 ** D
    anc = ancestor_sets(D)
    leaves = list(range(L, 2 * L))
    M, eps = params.big_m, params.eps
    y = dataset.labels
    weights = np.ones(n) if c_weights is None else np.asarray(c_weights, dtype=float)
    if weights.shape != (n,) or np.any(weights <= 0):
        raise FormulationError("c_weights must be positive, one per point")

    mod = MilpModel("oblique-tree-train")
    c = np.array([mod.add_variable(f"c_{i}", BINARY, obj=weights[i]) for i in range(n)])
    e = np.array([[mod.add_variable(f"e_{i}_{l}", BINARY) for l in leaves]
                  for i in range(n)])
    w = np.array([[mod.add_variable(f"w_{i}_{l}", CONTINUOUS, 0.0, Y) for l in leaves]
                  for i in range(n)])
    yhat = np.array([mod.add_variable(f"yhat_{i}", CONTINUOUS, 1.0, Y)
                     for i in range(n)])
    u_kind = CONTINUOUS if params.relax_u else INTEGER
    u = np.array([mod.add_variable(f"u_{l}", u_kind, 1.0, Y) for l in leaves])
    hp = np.array([[mod.add_variable(f"hp_{b}_{j}", CONTINUOUS, 0.0, INF, params.alpha2)
                    for j in num_cols] for b in range(1, B + 1)])
    hm = np.array([[mod.add_variable(f"hm_{b}_{j}", CONTINUOUS, 0.0, INF, params.alpha2)
                    for j in num_cols] for b in range(1, B + 1)])
    hp = hp.reshape(B, len(num_cols))
    hm = hm.reshape(B, len(num_cols))
    g = np.array([mod.add_variable(f"g_{b}", CONTINUOUS, -INF, INF)
                  for b in range(1, B + 1)])
    pp = np.array([[mod.add_variable(f"pp_{i}_{b}", CONTINUOUS, 0.0, M)
                    for b in range(1, B + 1)] for i in range(n)])
    pm = np.array([[mod.add_variable(f"pm_{i}_{b}", CONTINUOUS, 0.0, M)
                    for b in range(1, B + 1)] for i in range(n)])
    mm = np.array([[mod.add_variable(f"m_{i}_{b}", CONTINUOUS, 0.0, INF, params.alpha1)
                    for b in range(1, B + 1)] for i in range(n)])

    li = {l: k for k, l in enumerate(leaves)}

    # label linking: (y_i - Y) c_i <= y_i - yhat_i <= (y_i - 1) c_i
    for i in range(n):
        mod.add_constraint({yhat[i]: 1.0, c[i]: float(y[i] - Y)}, LE, float(y[i]),
                           name=f"label_hi_{i}")
        mod.add_constraint({yhat[i]: 1.0, c[i]: float(y[i] - 1)}, GE, float(y[i]),
                           name=f"label_lo_{i}")
    # predicted label accumulates the w products
    for i in range(n):
        row = {w[i, k]: 1.0 for k in range(L)}
        row[yhat[i]] = -1.0
        mod.add_constraint(row, EQ, 0.0, name=f"pred_{i}")
    # exact McCormick block for w_il = u_l * e_il
    for i in range(n):
        for l in leaves:
            k = li[l]
            mod.add_constraint({w[i, k]: 1.0, e[i, k]: -1.0}, GE, 0.0,
                               name=f"mc_a_{i}_{l}")
            mod.add_constraint({u[k]: 1.0, w[i, k]: -1.0, e[i, k]: 1.0}, GE, 1.0,
                               name=f"mc_b_{i}_{l}")
            mod.add_constraint({e[i, k]: float(Y), u[k]: 1.0, w[i, k]: -1.0}, LE,
                               float(Y), name=f"mc_c_{i}_{l}")
            mod.add_constraint({w[i, k]: 1.0, e[i, k]: -float(Y)}, LE, 0.0,
                               name=f"mc_d_{i}_{l}")
    # signed hyperplane split g_b - <h_b, x_i> = p+ - p-
    for i in range(n):
        xi = dataset.points[i]
        for b in range(1, B + 1):
            row = {g[b - 1]: 1.0, pp[i, b - 1]: -1.0, pm[i, b - 1]: 1.0}
            for jj, col in enumerate(num_cols):
                if xi[col] != 0.0:
                    row[hp[b - 1, jj]] = -xi[col]
                    row[hm[b - 1, jj]] = xi[col]
            mod.add_constraint(row, EQ, 0.0, name=f"split_{i}_{b}")
    margin_rows = []
    # big-M deactivation and eps margin, right-side ancestors
    for i in range(n):
        for l in leaves:
            for b in anc.right[l]:
                mod.add_constraint({pp[i, b - 1]: 1.0, e[i, li[l]]: M}, LE, M,
                                   name=f"bigm_r_{i}_{l}_{b}")
    for i in range(n):
        for l in leaves:
            for b in anc.right[l]:
                r = mod.add_constraint(
                    {pm[i, b - 1]: 1.0, mm[i, b - 1]: 1.0, e[i, li[l]]: -eps}, GE,
                    0.0, name=f"margin_r_{i}_{l}_{b}")
                margin_rows.append((r, b))
    # same, left-side ancestors
    for i in range(n):
        for l in leaves:
            for b in anc.left[l]:
                mod.add_constraint({pm[i, b - 1]: 1.0, e[i, li[l]]: M}, LE, M,
                                   name=f"bigm_l_{i}_{l}_{b}")
    for i in range(n):
        for l in leaves:
            for b in anc.left[l]:
                r = mod.add_constraint(
                    {pp[i, b - 1]: 1.0, mm[i, b - 1]: 1.0, e[i, li[l]]: -eps}, GE,
                    0.0, name=f"margin_l_{i}_{l}_{b}")
                margin_rows.append((r, b))
    # every point lands in exactly one leaf
    for i in range(n):
        mod.add_constraint({e[i, k]: 1.0 for k in range(L)}, EQ, 1.0,
                           name=f"assign_{i}")

    vmap = VarMap(n, dataset.d, Y, D, tuple(num_cols), c, e, w, yhat, u,
                  hp, hm, g, pp, pm, mm, anc, margin_rows, {}, {},
                  categorical_pending=with_categorical)
    return mod, vmap


def add_categorical(model, vmap, dataset, params: FormulationParams):
    """Attach the categorical branching block to a model built with
    `with_categorical=True`.

    Adds binary feature choosers hcat_bj (at most one per branch), binary
    value pickers s_bjv <= hcat_bj, routing rows driven by the constant
    indicators 1(x_ij = v), a deactivation band for numeric coefficients,
    and relaxes every eps-margin row to eps * (e_il - sum_j hcat_bj).
    """
    cat_cols = dataset.categorical_columns
    if not cat_cols:
        raise FormulationError("add_categorical requires a categorical column")
    if not vmap.categorical_pending:
        raise FormulationError("model was not built with with_categorical=True")
    params = rescale_to_unit_m(params) if params.rescale_to_unit_m else params
    eps = params.eps
    anc = vmap.ancestors
    li = {l: k for k, l in enumerate(vmap.leaves)}

    for b in vmap.branches:
        for j in cat_cols:
            vmap.cat_h[(b, j)] = model.add_variable(f"hcat_{b}_{j}", BINARY)
            for code in range(len(dataset.feature_kinds[j].values)):
                vmap.cat_s[(b, j, code)] = model.add_variable(f"s_{b}_{j}_{code}", BINARY)
    for b in vmap.branches:
        # at most one categorical feature drives the branch
        model.add_constraint({vmap.cat_h[(b, j)]: 1.0 for j in cat_cols}, LE, 1.0,
                             name=f"cat_one_{b}")
        for j in cat_cols:
            for code in range(len(dataset.feature_kinds[j].values)):
                model.add_constraint(
                    {vmap.cat_s[(b, j, code)]: 1.0, vmap.cat_h[(b, j)]: -1.0}, LE,
                    0.0, name=f"cat_pick_{b}_{j}_{code}")
    # routing: a matching picked value is necessary and sufficient to go left
    for i in range(dataset.n):
        hits = {j: int(dataset.points[i, j]) for j in cat_cols}
        for l in vmap.leaves:
            for b in anc.left[l]:
                row = {vmap.cat_s[(b, j, hits[j])]: 1.0 for j in cat_cols}
                row[vmap.e[i, li[l]]] = -1.0
                for j in cat_cols:
                    row[vmap.cat_h[(b, j)]] = row.get(vmap.cat_h[(b, j)], 0.0) - 1.0
                model.add_constraint(row, GE, -1.0, name=f"cat_left_{i}_{l}_{b}")
            for b in anc.right[l]:
                row = {vmap.cat_s[(b, j, hits[j])]: 1.0 for j in cat_cols}
                row[vmap.e[i, li[l]]] = row.get(vmap.e[i, li[l]], 0.0) + 1.0
                for j in cat_cols:
                    row[vmap.cat_h[(b, j)]] = row.get(vmap.cat_h[(b, j)], 0.0) + 1.0
                model.add_constraint(row, LE, 2.0, name=f"cat_right_{i}_{l}_{b}")
    # numeric coefficients switch off when a categorical feature is chosen
    for b in vmap.branches:
        for jj in range(len(vmap.numeric_cols)):
            hi = {vmap.hp[b - 1, jj]: 1.0, vmap.hm[b - 1, jj]: -1.0}
            lo = {vmap.hp[b - 1, jj]: -1.0, vmap.hm[b - 1, jj]: 1.0}
            for j in cat_cols:
                hi[vmap.cat_h[(b, j)]] = 1.0
                lo[vmap.cat_h[(b, j)]] = 1.0
            model.add_constraint(hi, LE, 1.0, name=f"cat_numoff_hi_{b}_{jj}")
            model.add_constraint(lo, LE, 1.0, name=f"cat_numoff_lo_{b}_{jj}")
    # margins only bind on numerically-split branches
    for row_idx, b in vmap.margin_rows:
        for j in cat_cols:
            model.add_coefficient(row_idx, vmap.cat_h[(b, j)], eps)
    vmap.categorical_pending = False


def _leaf_occupied(values, vmap):
    return values[vmap.e].max(axis=0) > 0.5


def extract_tree(solution, vmap, params: FormulationParams, dataset=None):
    """Map an incumbent back onto an ObliqueTree.

    Leaf labels are rounded to the nearest integer in [1, Y]; a non-empty
    leaf whose label sits further than 0.01 from an integer signals a
    solver tolerance breach and raises.

    When `dataset` is supplied, each branch's rule is reconciled with the
    incumbent's leaf assignment: if deterministic ties-go-left routing
    disagrees with some e_il (possible when the hyperplane passes exactly
    through a point, which the margin slacks permit at a cost of
    alpha1 * eps), a small LP searches for a hyperplane that strictly
    realizes the assignment, so the extracted tree's training
    misclassification count matches sum(c) whenever the assignment is
    realizable at all.
    """
    if solution.status in (SolveStatus.INFEASIBLE, SolveStatus.UNBOUNDED) \
            or not solution.has_values:
        raise ExtractionError(f"no incumbent to extract (status {solution.status})")
    vals = solution.values
    Y, D = vmap.num_classes, vmap.depth
    B, L = 2 ** D - 1, 2 ** D
    occupied = _leaf_occupied(vals, vmap)
    labels = np.empty(L, dtype=np.int64)
    for k in range(L):
        ul = float(vals[vmap.u[k]])
        nearest = round(ul)
        if occupied[k] and abs(ul - nearest) > 0.01:
            raise ExtractionError(
                f"leaf label {ul:.4f} too fractional on a non-empty leaf")
        labels[k] = min(max(int(math.floor(ul + 0.5)), 1), Y)

    coeffs = np.zeros((B, vmap.d))
    for jj, col in enumerate(vmap.numeric_cols):
        coeffs[:, col] = vals[vmap.hp[:, jj]] - vals[vmap.hm[:, jj]]
    biases = vals[vmap.g].copy()

    cat_rules = {}
    for b in vmap.branches:
        chosen = [(j, vmap.cat_h[(b, j)]) for j in sorted({jc for (bb, jc) in vmap.cat_h
                                                           if bb == b})
                  if vals[vmap.cat_h[(b, j)]] > 0.5] if vmap.cat_h else []
        if chosen:
            j = chosen[0][0]
            accepted = frozenset(code for (bb, jc, code), sid in vmap.cat_s.items()
                                 if bb == b and jc == j and vals[sid] > 0.5)
            cat_rules[b] = CategoricalRule(j, accepted)
            coeffs[b - 1] = 0.0
            biases[b - 1] = 0.0

    if dataset is not None:
        _realize_assignment(vals, vmap, coeffs, biases, cat_rules, dataset)
    return ObliqueTree(D, coeffs, biases, labels, cat_rules)


def _realize_assignment(vals, vmap, coeffs, biases, cat_rules, dataset):
    """Per branch, make deterministic routing agree with the incumbent's e.

    Where the extracted rule already sends every point through the branch
    to its assigned side, nothing changes.  Otherwise a margin-maximizing
    LP over (h, g) with |h|_inf <= 1 looks for a strict separator of the
    assigned sides; if one exists it replaces the branch rule, else the
    original coefficients are kept (the assignment is unrealizable, e.g.
    duplicate points split across sides)."""
    from .milp.simplex import OPTIMAL, solve_dense_lp

    leaf_of = np.array(list(vmap.leaves))[np.argmax(vals[vmap.e], axis=1)]
    anc = vmap.ancestors
    num_cols = list(vmap.numeric_cols)
    for b in vmap.branches:
        if b in cat_rules:
            continue
        goes_left = {l: (b in anc.left[l]) for l in vmap.leaves}
        through = np.isin(leaf_of, [l for l in vmap.leaves
                                    if b in anc.left[l] or b in anc.right[l]])
        if not through.any():
            continue
        pts = dataset.points[through][:, num_cols]
        want_left = np.array([goes_left[int(l)] for l in leaf_of[through]])
        v = biases[b - 1] - dataset.points[through] @ coeffs[b - 1]
        if np.all((v >= 0) == want_left):
            continue  # ties-go-left already reproduces the assignment
        k, dq = pts.shape
        if dq == 0:
            continue
        # max t s.t. left: h.x - g + t <= 0; right: g - h.x + t <= 0; |h| <= 1
        A = np.zeros((k, dq + 2))
        sign = np.where(want_left, 1.0, -1.0)
        A[:, :dq] = pts * sign[:, None]
        A[:, dq] = -sign
        A[:, dq + 1] = 1.0
        c = np.zeros(dq + 2)
        c[dq + 1] = -1.0
        lb = np.concatenate([np.full(dq, -1.0), [-INF], [0.0]])
        ub = np.concatenate([np.full(dq, 1.0), [INF], [1.0]])
        status, x, _ = solve_dense_lp(A, np.zeros(k),
                                      np.zeros(k, dtype=np.int8), c, lb, ub)
        if status == OPTIMAL and x[dq + 1] > _TIE_TOL:
            coeffs[b - 1] = 0.0
            coeffs[b - 1][num_cols] = x[:dq]
            biases[b - 1] = x[dq]


def embed_warm_start(tree: ObliqueTree, dataset, vmap, params: FormulationParams):
    """Variable values realizing `tree` inside the MILP; always feasible.

    Branch hyperplanes are rescaled (a positive factor never changes
    routing) so every split value fits inside the big-M band; margin
    slacks are set to exactly cover the eps requirement on each point's
    root-to-leaf path.
    """
    params = rescale_to_unit_m(params) if params.rescale_to_unit_m else params
    if tree.depth != vmap.depth:
        raise FormulationError(
            f"warm-start tree depth {tree.depth} does not match model depth {vmap.depth}")
    n, Y = dataset.n, vmap.num_classes
    M, eps = params.big_m, params.eps
    anc = vmap.ancestors
    li = {l: k for k, l in enumerate(vmap.leaves)}
    num_cols = list(vmap.numeric_cols)

    nvars = (vmap.m.max() + 1) if not vmap.cat_s else (
        max(vmap.cat_s.values()) + 1)
    nvars = max(int(nvars), int(vmap.m.max()) + 1,
                max(vmap.cat_h.values(), default=-1) + 1,
                max(vmap.cat_s.values(), default=-1) + 1)
    vals = np.zeros(nvars)

    leaves_of = tree.route_many(dataset.points)
    u_vals = np.asarray(tree.leaf_labels, dtype=float)
    for k in range(2 ** tree.depth):
        vals[vmap.u[k]] = u_vals[k]
    for i in range(n):
        k = li[int(leaves_of[i])]
        vals[vmap.e[i, k]] = 1.0
        vals[vmap.w[i, k]] = u_vals[k]
        vals[vmap.yhat[i]] = u_vals[k]
        vals[vmap.c[i]] = 0.0 if int(u_vals[k]) == int(dataset.labels[i]) else 1.0

    for b in vmap.branches:
        rule = tree.cat_rules.get(b)
        if rule is not None:
            if (b, rule.feature) not in vmap.cat_h:
                raise FormulationError(
                    "tree has a categorical rule but the model lacks categorical mode")
            vals[vmap.cat_h[(b, rule.feature)]] = 1.0
            for code in rule.accepted:
                vals[vmap.cat_s[(b, rule.feature, int(code))]] = 1.0
            continue  # split values are zero; margins are switched off
        h_full = np.asarray(tree.coeffs[b - 1], dtype=float)
        stray = [j for j in range(dataset.d)
                 if j not in num_cols and h_full[j] != 0.0]
        if stray:
            raise FormulationError(
                f"tree branch {b} uses non-numeric columns {stray}")
        gb = float(tree.biases[b - 1])
        v = gb - dataset.points @ h_full
        scale = max(1.0, float(np.abs(v).max(initial=0.0)) / M)
        if vmap.cat_h:
            hmax = float(np.abs(h_full).max(initial=0.0))
            scale = max(scale, hmax)  # categorical mode caps |h| at 1
        h_full = h_full / scale
        gb /= scale
        v /= scale
        for jj, col in enumerate(num_cols):
            vals[vmap.hp[b - 1, jj]] = max(h_full[col], 0.0)
            vals[vmap.hm[b - 1, jj]] = max(-h_full[col], 0.0)
        vals[vmap.g[b - 1]] = gb
        vals[vmap.pp[:, b - 1]] = np.maximum(v, 0.0)
        vals[vmap.pm[:, b - 1]] = np.maximum(-v, 0.0)
        for i in range(n):
            l = int(leaves_of[i])
            if b in anc.left[l]:
                vals[vmap.m[i, b - 1]] = max(0.0, eps - vals[vmap.pp[i, b - 1]])
            elif b in anc.right[l]:
                vals[vmap.m[i, b - 1]] = max(0.0, eps - vals[vmap.pm[i, b - 1]])
    return vals
