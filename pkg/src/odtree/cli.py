"""Command-line interface.

Subcommands: train, train-ds, iterate, select, cv, benchmark, predict.
Reports are written as JSON plus a tree.json next to them; benchmark
emits an aligned text table and a CSV.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from .cart import CartParams, train_cart
from .cuts import CutConfig
from .data import apply_scaling, load_csv, normalize, stratified_split
from .formulation import FormulationParams
from .pipeline import (
    RunConfig,
    benchmark,
    cross_validate,
    iterative_train,
    train_optimal,
    train_with_selection,
)
from .selection import SelectionParams, select_all
from .tree import ObliqueTree, axis_to_oblique


def _add_common(p):
    p.add_argument("data", help="CSV file with a header row")
    p.add_argument("--label", required=True, help="label column name")
    p.add_argument("--categorical", default="",
                   help="comma-separated categorical column names")
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--time-limit", type=float, default=900.0)
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--alpha1", type=float, default=1000.0)
    p.add_argument("--alpha2", type=float, default=0.1)
    p.add_argument("--big-m", type=float, default=1.0)
    p.add_argument("--no-rescale", action="store_true",
                   help="keep the given big-M instead of rescaling it to 1")
    p.add_argument("--no-cuts", action="store_true")
    p.add_argument("--relax-u", action="store_true",
                   help="relax leaf labels to continuous [1, Y]")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", choices=["builtin", "external"], default="builtin")
    p.add_argument("--train-fraction", type=float, default=0.75)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--out", default=None, help="output directory")


def _add_selection(p):
    p.add_argument("--eps-prime", type=float, default=0.0)
    p.add_argument("--beta1", type=float, default=0.3)
    p.add_argument("--beta2", type=float, default=0.05)
    p.add_argument("--balanced", action="store_true",
                   help="use the balanced selection variant")
    p.add_argument("--parallel", action="store_true",
                   help="solve per-point selection LPs on a process pool")
    p.add_argument("--workers", type=int, default=None)


def _config(args, use_selection=False, rounds=1):
    params = FormulationParams(
        depth=args.depth, alpha1=args.alpha1, alpha2=args.alpha2, eps=args.eps,
        big_m=args.big_m, relax_u=args.relax_u,
        rescale_to_unit_m=not args.no_rescale, add_cuts=not args.no_cuts)
    sel = SelectionParams(
        eps_prime=getattr(args, "eps_prime", 0.0),
        beta1=getattr(args, "beta1", 0.3),
        beta2=getattr(args, "beta2", 0.05),
        parallel=getattr(args, "parallel", False),
        workers=getattr(args, "workers", None),
        seed=args.seed,
        balanced=getattr(args, "balanced", False))
    categorical = tuple(c for c in args.categorical.split(",") if c)
    return RunConfig(
        data_path=args.data, label=args.label, categorical=categorical,
        params=params, selection=sel, cut_config=CutConfig(seed=args.seed),
        time_limit=args.time_limit, seed=args.seed, backend=args.backend,
        train_fraction=args.train_fraction, folds=args.folds,
        out_dir=args.out, use_selection=use_selection, rounds=rounds)


def _emit(report, out_dir):
    print(f"[{report.name}] status={report.status} "
          f"train_acc={report.train_accuracy:.4f} test_acc={report.test_accuracy:.4f} "
          f"(CART {report.cart_train_accuracy:.4f}/{report.cart_test_accuracy:.4f}) "
          f"time={report.solve_seconds:.2f}s"
          + (f" selected={100 * report.selection_fraction:.2f}%"
             if report.selection_fraction is not None else ""))
    if out_dir:
        report.save(out_dir)
        print(f"wrote {out_dir}/report.json and {out_dir}/tree.json")


def cmd_train(args):
    _emit(train_optimal(_config(args)), args.out)


def cmd_train_ds(args):
    _emit(train_with_selection(_config(args, use_selection=True)), args.out)


def cmd_iterate(args):
    report = iterative_train(_config(args, use_selection=True, rounds=args.rounds))
    print("round accuracies:", " ".join(f"{a:.4f}" for a in report.round_accuracies))
    _emit(report, args.out)


def cmd_select(args):
    config = _config(args, use_selection=True)
    ds = load_csv(args.data, args.label,
                  {c: "categorical" for c in config.categorical})
    split = stratified_split(ds, args.train_fraction, folds=1, seed=args.seed)
    train = normalize(ds.subset(split.train_indices))
    axis = train_cart(train, CartParams(max_depth=args.depth))
    warm = axis_to_oblique(axis, args.depth, train.d)
    summary = select_all(train, warm, config.selection)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "selected.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(ds.feature_names) + [ds.label_name, "original_index"])
        for local in summary.reduced_indices:
            row_idx = int(split.train_indices[local])
            raw = [repr(v) for v in ds.points[row_idx]]
            writer.writerow(raw + [ds.label_values[ds.labels[row_idx] - 1], row_idx])
    sidecar = {
        "n_train": train.n,
        "n_selected": int(len(summary.reduced_indices)),
        "selection_fraction": summary.fraction,
        "n_misclassified_kept": int(len(summary.misclassified)),
        "clusters": summary.stats(),
    }
    with open(os.path.join(out_dir, "selection.json"), "w") as fh:
        json.dump(sidecar, fh, indent=2)
    print(f"selected {sidecar['n_selected']}/{train.n} points "
          f"({100 * summary.fraction:.2f}%) -> {csv_path}")


def cmd_cv(args):
    grid = {}
    for key in ("eps", "alpha1", "alpha2", "beta1", "beta2"):
        raw = getattr(args, f"grid_{key}")
        if raw:
            grid[key] = [float(v) for v in raw.split(",")]
    config = _config(args, use_selection=args.with_selection)
    if grid:
        config.cv_grid = grid
    best, report = cross_validate(config)
    print("best grid point:", json.dumps(best, sort_keys=True))
    _emit(report, args.out)


def cmd_benchmark(args):
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    configs = []
    for mode in modes:
        if mode == "train":
            configs.append(("train", _config(args)))
        elif mode == "train-ds":
            configs.append(("train-ds", _config(args, use_selection=True)))
        elif mode == "iterate":
            configs.append(("iterate", _config(args, use_selection=True,
                                               rounds=args.rounds)))
        else:
            raise SystemExit(f"unknown benchmark mode {mode!r}")
    table = benchmark(configs)
    print(table.text())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "benchmark.txt"), "w") as fh:
            fh.write(table.text())
        with open(os.path.join(args.out, "benchmark.csv"), "w") as fh:
            fh.write(table.csv())
        print(f"wrote {args.out}/benchmark.txt and {args.out}/benchmark.csv")


def cmd_predict(args):
    with open(args.tree) as fh:
        tree = ObliqueTree.from_json(fh.read())
    overrides = {c: "categorical" for c in args.categorical.split(",") if c}
    ds = load_csv(args.data, args.label, overrides)
    report_path = args.report or os.path.join(os.path.dirname(args.tree), "report.json")
    if os.path.exists(report_path):
        with open(report_path) as fh:
            doc = json.load(fh)
        if "scaling" in doc:
            s = doc["scaling"]
            ds = apply_scaling(ds, (tuple(s["columns"]), np.array(s["mins"]),
                                    np.array(s["ranges"])))
    pred = tree.predict(ds)
    decoded = ds.decode_labels(pred)
    out = args.out or "predictions.csv"
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "prediction"])
        for i, p in enumerate(decoded):
            writer.writerow([i, p])
    acc = float(np.mean(pred == ds.labels))
    print(f"wrote {out}; accuracy against {args.label!r}: {acc:.4f}")


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="odtree",
        description="Optimal oblique decision trees via mixed-integer programming")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on the full training split")
    _add_common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("train-ds", help="LP-based selection, then train")
    _add_common(p)
    _add_selection(p)
    p.set_defaults(fn=cmd_train_ds)

    p = sub.add_parser("iterate", help="iterative selection/retrain rounds")
    _add_common(p)
    _add_selection(p)
    p.add_argument("--rounds", type=int, default=3)
    p.set_defaults(fn=cmd_iterate)

    p = sub.add_parser("select", help="emit the selected training subset")
    _add_common(p)
    _add_selection(p)
    p.set_defaults(fn=cmd_select)

    p = sub.add_parser("cv", help="cross-validate the hyperparameter grid")
    _add_common(p)
    _add_selection(p)
    p.add_argument("--with-selection", action="store_true")
    for key in ("eps", "alpha1", "alpha2", "beta1", "beta2"):
        p.add_argument(f"--grid-{key}", default="",
                       help=f"comma-separated {key} grid values")
    p.set_defaults(fn=cmd_cv)

    p = sub.add_parser("benchmark", help="compare training modes on one dataset")
    _add_common(p)
    _add_selection(p)
    p.add_argument("--modes", default="train,train-ds")
    p.add_argument("--rounds", type=int, default=3)
    p.set_defaults(fn=cmd_benchmark)

    p = sub.add_parser("predict", help="apply a stored tree to a CSV")
    p.add_argument("data")
    p.add_argument("--tree", required=True, help="tree.json path")
    p.add_argument("--report", default=None,
                   help="report.json carrying the feature scaling")
    p.add_argument("--label", required=True)
    p.add_argument("--categorical", default="")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_predict)

    args = ap.parse_args(argv)
    args.fn(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
