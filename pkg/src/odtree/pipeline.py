"""End-to-end training flows: full-MIP training, selection-then-train,
iterative retraining, cross-validation, and benchmark tables.

Every flow shares the same skeleton: stratified split, min-max
normalization fitted on the training side, a greedy axis tree as warm
start and baseline, then the MILP solve and tree extraction.  The final
reported tree never has lower training accuracy than the warm start; if
a solver returns something worse (possible with accuracy-versus-margin
tradeoffs in the objective, or a backend that ignores warm starts), the
warm-start tree is reported instead.
"""

import itertools
import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .cart import CartParams, train_cart
from .cuts import CutConfig, add_cuts, prop1_cuts, theorem3_cuts
from .data import (
    Dataset,
    apply_scaling,
    cluster_by_leaf,
    load_csv,
    normalize,
    stratified_split,
)
from .formulation import (
    FormulationParams,
    add_categorical,
    build_model,
    embed_warm_start,
    extract_tree,
)
from .milp import SolveStatus, SolverConfig, backend_solve
from .selection import SelectionParams, select_all, selection_lp_cluster
from .tree import ObliqueTree, axis_to_oblique


class PipelineError(ValueError):
    pass


@dataclass
class RunConfig:
    data_path: str | None = None
    label: str = "label"
    categorical: tuple = ()
    params: FormulationParams = field(default_factory=FormulationParams)
    selection: SelectionParams = field(default_factory=SelectionParams)
    cut_config: CutConfig = field(default_factory=CutConfig)
    time_limit: float = 900.0
    seed: int = 0
    backend: str = "builtin"
    train_fraction: float = 0.75
    folds: int = 5
    out_dir: str | None = None
    cv_grid: dict | None = None
    use_selection: bool = False
    rounds: int = 1

    def __post_init__(self):
        if self.time_limit <= 0:
            raise PipelineError("time limit must be positive")

    @property
    def depth(self):
        return self.params.depth


@dataclass
class RunReport:
    name: str
    depth: int
    n_train: int
    n_test: int
    train_accuracy: float
    test_accuracy: float
    cart_train_accuracy: float
    cart_test_accuracy: float
    status: str
    gap: float
    solve_seconds: float
    objective: float
    objective_trace: list
    selection_fraction: float | None
    tree: ObliqueTree
    scaling: tuple | None = None
    used_warm_fallback: bool = False
    round_accuracies: list = field(default_factory=list)
    fold_accuracies: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "name": self.name,
            "depth": self.depth,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "train_accuracy": self.train_accuracy,
            "test_accuracy": self.test_accuracy,
            "cart_train_accuracy": self.cart_train_accuracy,
            "cart_test_accuracy": self.cart_test_accuracy,
            "status": self.status,
            "gap": self.gap if math.isfinite(self.gap) else None,
            "solve_seconds": self.solve_seconds,
            "objective": self.objective,
            "objective_trace": self.objective_trace,
            "selection_fraction": self.selection_fraction,
            "used_warm_fallback": self.used_warm_fallback,
            "round_accuracies": self.round_accuracies,
            "fold_accuracies": self.fold_accuracies,
            "params": self.params,
            "tree": json.loads(self.tree.to_json()),
        }
        if self.scaling is not None:
            cols, mins, ranges = self.scaling
            out["scaling"] = {"columns": list(cols),
                              "mins": [float(v) for v in mins],
                              "ranges": [float(v) for v in ranges]}
        return out

    def save(self, out_dir):
        import os
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
        with open(os.path.join(out_dir, "tree.json"), "w") as fh:
            fh.write(self.tree.to_json())


def _load_dataset(config):
    if config.data_path is None:
        raise PipelineError("no dataset given: set data_path or pass a Dataset")
    overrides = {c: "categorical" for c in config.categorical}
    return load_csv(config.data_path, config.label, overrides)


def _prepare(config, dataset):
    """Split, normalize the training side, carry the transform to test."""
    ds = dataset if dataset is not None else _load_dataset(config)
    split = stratified_split(ds, config.train_fraction, folds=1, seed=config.seed)
    train = normalize(ds.subset(split.train_indices))
    test = ds.subset(split.test_indices)
    if len(split.test_indices):
        test = apply_scaling(test, train.scaling)
    return train, test


def _warm_tree(train, depth):
    axis = train_cart(train, CartParams(max_depth=depth))
    return axis_to_oblique(axis, depth, train.d)


def solve_training_milp(train, params, cut_config, backend, time_limit,
                        warm_tree=None, c_weights=None):
    """Build, warm-start, and solve the training MILP on `train`.

    Returns (tree, solution, seconds).  The extracted tree repairs
    boundary ties against the incumbent's assignment.
    """
    with_cat = bool(train.categorical_columns)
    model, vmap = build_model(train, params, c_weights=c_weights,
                              with_categorical=with_cat)
    if with_cat:
        add_categorical(model, vmap, train, params)
    if params.add_cuts and cut_config is not None:
        part = train.class_partition()
        add_cuts(model, prop1_cuts(part, vmap, cut_config))
        add_cuts(model, theorem3_cuts(part, vmap.ancestors, vmap, cut_config))
    warm = None
    if warm_tree is not None:
        warm = embed_warm_start(warm_tree, train, vmap, params)
    cfg = SolverConfig(time_limit=time_limit)
    t0 = time.perf_counter()
    sol = backend_solve(model, cfg, warm, backend=backend)
    seconds = time.perf_counter() - t0
    tree = extract_tree(sol, vmap, params, dataset=train)
    return tree, sol, seconds


def _finalize(name, config, train, test, warm, tree, sol, seconds,
              selection_fraction=None, rounds=None):
    cart_train = warm.accuracy(train)
    cart_test = warm.accuracy(test) if test.n else float("nan")
    train_acc = tree.accuracy(train)
    fallback = False
    if train_acc < cart_train:
        tree, train_acc, fallback = warm, cart_train, True
    return RunReport(
        name=name,
        depth=config.depth,
        n_train=train.n,
        n_test=test.n,
        train_accuracy=train_acc,
        test_accuracy=tree.accuracy(test) if test.n else float("nan"),
        cart_train_accuracy=cart_train,
        cart_test_accuracy=cart_test,
        status=sol.status.value,
        gap=sol.gap,
        solve_seconds=seconds,
        objective=sol.objective,
        objective_trace=list(sol.trace),
        selection_fraction=selection_fraction,
        tree=tree,
        scaling=train.scaling,
        used_warm_fallback=fallback,
        round_accuracies=rounds or [],
        params={"alpha1": config.params.alpha1, "alpha2": config.params.alpha2,
                "eps": config.params.eps, "big_m": config.params.big_m,
                "depth": config.params.depth, "seed": config.seed,
                "backend": config.backend,
                "beta1": config.selection.beta1, "beta2": config.selection.beta2,
                "eps_prime": config.selection.eps_prime},
    )


def train_optimal(config: RunConfig, dataset: Dataset | None = None) -> RunReport:
    """Full training pipeline on the whole training split."""
    train, test = _prepare(config, dataset)
    warm = _warm_tree(train, config.depth)
    tree, sol, seconds = solve_training_milp(
        train, config.params, config.cut_config, config.backend,
        config.time_limit, warm_tree=warm)
    return _finalize("train", config, train, test, warm, tree, sol, seconds)


def train_with_selection(config: RunConfig, dataset: Dataset | None = None,
                         return_summary=False):
    """Selection-then-train pipeline; accuracy is still measured on the
    full training and test splits."""
    train, test = _prepare(config, dataset)
    warm = _warm_tree(train, config.depth)
    summary = select_all(train, warm, config.selection)
    reduced_idx = summary.reduced_indices
    fraction = summary.fraction
    reduced = train.subset(reduced_idx) if len(reduced_idx) else train
    if reduced.n < 2 or np.count_nonzero(reduced.class_sizes) < 2:
        reduced, fraction = train, 1.0  # degenerate selection: train on everything
    tree, sol, seconds = solve_training_milp(
        reduced, config.params, config.cut_config, config.backend,
        config.time_limit, warm_tree=warm)
    report = _finalize("train-ds", config, train, test, warm, tree, sol, seconds,
                       selection_fraction=fraction)
    if return_summary:
        return report, summary
    return report


def iterative_train(config: RunConfig, rounds: int | None = None,
                    dataset: Dataset | None = None) -> RunReport:
    """Iterative retraining on reselected subsets.

    Each round clusters the training data under the current tree, keeps
    the misclassified set I plus the expresser set J and remainder K from
    the per-cluster hull LPs (dropping the expressible interiors), and
    retrains with the J points' misclassification cost inflated to
    |I| + 1, so any optimal retrain keeps all of J correct.  A timed-out
    round keeps the previous tree and continues.
    """
    rounds = config.rounds if rounds is None else rounds
    if rounds < 1:
        raise PipelineError("rounds must be >= 1")
    train, test = _prepare(config, dataset)
    warm = _warm_tree(train, config.depth)
    tree = warm
    accs = [tree.accuracy(train)]
    last_sol, last_secs, total_secs = None, 0.0, 0.0
    for _ in range(rounds):
        clusters, missed = cluster_by_leaf(train, tree)
        expressers, remainder = [], []
        for cluster in clusters:
            pts = train.points[cluster.indices]
            if len(cluster.indices) < 2:
                remainder.append(cluster.indices)
                continue
            bvec, lam = selection_lp_cluster(
                pts, config.selection.eps_prime,
                parallel=config.selection.parallel,
                workers=config.selection.workers)
            ins = bvec > 0.5 if config.selection.eps_prime == 0 else bvec >= 1 - 1e-9
            used = np.zeros(len(cluster.indices), dtype=bool)
            if ins.any():
                used = (lam[ins] > 1e-9).any(axis=0)
            j_mask = used & ~ins
            k_mask = ~ins & ~j_mask
            expressers.append(cluster.indices[j_mask])
            remainder.append(cluster.indices[k_mask])
        j_idx = np.concatenate(expressers) if expressers else np.empty(0, np.int64)
        k_idx = np.concatenate(remainder) if remainder else np.empty(0, np.int64)
        subset = np.unique(np.concatenate([missed, j_idx, k_idx])).astype(np.int64)
        if subset.size < 2:
            break
        sub = train.subset(subset)
        if np.count_nonzero(sub.class_sizes) < 2:
            break
        weights = np.ones(subset.size)
        weights[np.isin(subset, j_idx)] = float(len(missed) + 1)
        new_tree, sol, secs = solve_training_milp(
            sub, config.params, config.cut_config, config.backend,
            config.time_limit, warm_tree=tree, c_weights=weights)
        total_secs += secs
        last_sol, last_secs = sol, secs
        if sol.status is SolveStatus.TIME_LIMIT and sol.gap > 0:
            accs.append(tree.accuracy(train))  # keep previous tree
            continue
        tree = new_tree
        accs.append(tree.accuracy(train))
    report = _finalize("iterate", config, train, test, warm, tree,
                       last_sol if last_sol is not None else _null_solution(),
                       total_secs, rounds=accs)
    return report


def _null_solution():
    from .milp import Solution
    return Solution(SolveStatus.OPTIMAL, values=None, objective=float("nan"),
                    gap=0.0)


_DEFAULT_GRID = {
    "eps": [0.005, 0.01, 0.05],
    "alpha1": [30.0, 1000.0, 1e6],
    "alpha2": [0.01, 0.1],
}


def cross_validate(config: RunConfig, dataset: Dataset | None = None):
    """Grid search by mean validation accuracy over stratified folds.

    Ties keep the first grid point in iteration order (eps, alpha1,
    alpha2, beta1, beta2); the winner is refit on the full training split.
    """
    grid = config.cv_grid or dict(_DEFAULT_GRID)
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise PipelineError("cv grid must be nonempty")
    ds = dataset if dataset is not None else _load_dataset(config)
    split = stratified_split(ds, config.train_fraction,
                             folds=max(2, config.folds), seed=config.seed)
    train_full = normalize(ds.subset(split.train_indices))
    keys = [k for k in ("eps", "alpha1", "alpha2", "beta1", "beta2") if k in grid]
    combos = list(itertools.product(*(grid[k] for k in keys)))
    best, best_acc, best_folds = None, -1.0, []
    for combo in combos:
        named = dict(zip(keys, combo))
        params = replace(config.params,
                         eps=named.get("eps", config.params.eps),
                         alpha1=named.get("alpha1", config.params.alpha1),
                         alpha2=named.get("alpha2", config.params.alpha2))
        sel = replace(config.selection,
                      beta1=named.get("beta1", config.selection.beta1),
                      beta2=named.get("beta2", config.selection.beta2))
        fold_accs = []
        for f in range(max(2, config.folds)):
            val_rows = split.train_indices[split.fold_of == f]
            fit_rows = split.train_indices[split.fold_of != f]
            fit = train_full.subset(np.searchsorted(split.train_indices, fit_rows))
            val = train_full.subset(np.searchsorted(split.train_indices, val_rows))
            warm = _warm_tree(fit, params.depth)
            sub_cfg = replace(config, params=params, selection=sel)
            if config.use_selection:
                summary = select_all(fit, warm, sel)
                fit_red = fit.subset(summary.reduced_indices) \
                    if len(summary.reduced_indices) >= 2 else fit
                if np.count_nonzero(fit_red.class_sizes) < 2:
                    fit_red = fit
            else:
                fit_red = fit
            tree, _, _ = solve_training_milp(
                fit_red, params, sub_cfg.cut_config, config.backend,
                config.time_limit, warm_tree=warm)
            if tree.accuracy(fit) < warm.accuracy(fit):
                tree = warm
            fold_accs.append(tree.accuracy(val))
        mean_acc = float(np.mean(fold_accs))
        if mean_acc > best_acc + 1e-12:
            best, best_acc, best_folds = named, mean_acc, fold_accs
    final_cfg = replace(
        config,
        params=replace(config.params,
                       eps=best.get("eps", config.params.eps),
                       alpha1=best.get("alpha1", config.params.alpha1),
                       alpha2=best.get("alpha2", config.params.alpha2)),
        selection=replace(config.selection,
                          beta1=best.get("beta1", config.selection.beta1),
                          beta2=best.get("beta2", config.selection.beta2)))
    runner = train_with_selection if config.use_selection else train_optimal
    report = runner(final_cfg, dataset=ds)
    report.fold_accuracies = best_folds
    report.params["cv_choice"] = best
    return best, report


@dataclass
class BenchmarkTable:
    names: list
    rows: dict  # metric -> list of per-config values (None renders as em dash)

    _ORDER = ["test accuracy (%)", "train accuracy (%)", "CART test accuracy (%)",
              "CART train accuracy (%)", "run time (s)", "selected data (%)",
              "eps", "alpha1", "alpha2", "beta1", "beta2"]

    def _cell(self, v):
        if v is None or (isinstance(v, float) and math.isnan(v)):
            return "—"
        if isinstance(v, float):
            return f"{v:.4g}"
        return str(v)

    def text(self):
        width = max([len(m) for m in self._ORDER] + [10])
        cols = [max(len(n), 10) for n in self.names]
        out = [" " * width + "  " + "  ".join(n.rjust(c) for n, c in zip(self.names, cols))]
        for metric in self._ORDER:
            vals = self.rows.get(metric)
            if vals is None:
                continue
            cells = [self._cell(v).rjust(c) for v, c in zip(vals, cols)]
            out.append(metric.ljust(width) + "  " + "  ".join(cells))
        return "\n".join(out) + "\n"

    def csv(self):
        lines = ["metric," + ",".join(self.names)]
        for metric in self._ORDER:
            vals = self.rows.get(metric)
            if vals is None:
                continue
            lines.append(metric + "," + ",".join(self._cell(v) for v in vals))
        return "\n".join(lines) + "\n"


def benchmark(configs, dataset: Dataset | None = None) -> BenchmarkTable:
    """Run each (name, config) and assemble the comparison table.

    The CART baseline rows come from the warm-start tree evaluated on the
    identical split, so every column is internally comparable.
    """
    if not configs:
        raise PipelineError("benchmark needs at least one run config")
    names, reports = [], []
    for name, cfg in configs:
        if cfg.rounds > 1:
            rep = iterative_train(cfg, dataset=dataset)
        elif cfg.use_selection:
            rep = train_with_selection(cfg, dataset=dataset)
        else:
            rep = train_optimal(cfg, dataset=dataset)
        names.append(name)
        reports.append(rep)
    rows = {
        "test accuracy (%)": [100 * r.test_accuracy for r in reports],
        "train accuracy (%)": [100 * r.train_accuracy for r in reports],
        "CART test accuracy (%)": [100 * r.cart_test_accuracy for r in reports],
        "CART train accuracy (%)": [100 * r.cart_train_accuracy for r in reports],
        "run time (s)": [r.solve_seconds for r in reports],
        "selected data (%)": [None if r.selection_fraction is None
                              else 100 * r.selection_fraction for r in reports],
        "eps": [r.params["eps"] for r in reports],
        "alpha1": [r.params["alpha1"] for r in reports],
        "alpha2": [r.params["alpha2"] for r in reports],
        "beta1": [r.params["beta1"] if r.selection_fraction is not None else None
                  for r in reports],
        "beta2": [r.params["beta2"] if r.selection_fraction is not None else None
                  for r in reports],
    }
    return BenchmarkTable(names, rows)
