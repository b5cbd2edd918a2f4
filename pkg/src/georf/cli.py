"""Command-line interface: ``georf <command> ...``.

Exit status is 0 on success, 1 on a data or file error (one diagnostic line
on stderr) and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import GrfConfig, SpatialDataset
from .errors import GeorfError
from .evaluation import default_grids, grid_search, isa_tune, kfold_cv, run_experiments
from .grf import fit_grf, importance_table, predict_grf
from .io import (
    cv_report_to_dict,
    export_importance,
    isa_rows,
    isa_to_dict,
    load_csv,
    load_points_csv,
    tune_report_to_dict,
    write_csv,
    write_dataset_csv,
    write_json,
)
from .persist import load_model, read_metadata, save_model
from .spatial import isa_scan
from .synth import inject_outliers, make_checkerboard, make_clustered, make_quadrants, make_spatial_field

COMMANDS = ("fit", "predict", "cv", "tune", "isa", "importance", "experiment")
IMPROVEMENTS = ("i1", "i2", "i3")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _csv_list(kind):
    def parse(text: str):
        try:
            return [kind(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None

    return parse


def _mtry(text: str):
    return int(text) if text.isdigit() else text


def _enable(text: str):
    parts = [p.strip().lower() for p in text.split(",") if p.strip()]
    bad = [p for p in parts if p not in IMPROVEMENTS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown improvement(s): {', '.join(bad)}")
    return set(parts)


def _workers(text: str):
    if text == "auto":
        return text
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a positive integer or 'auto'") from None
    if v < 1:
        raise argparse.ArgumentTypeError("expected a positive integer or 'auto'")
    return v


def _add_data(p, *, target=True):
    p.add_argument("data", help="input CSV with a header row")
    if target:
        p.add_argument("--target", required=True, help="target column")
    p.add_argument("--x", default="x", help="x coordinate column (default: x)")
    p.add_argument("--y", default="y", help="y coordinate column (default: y)")
    p.add_argument("--features", type=_csv_list(str), help="comma-separated feature columns (default: all others)")
    p.add_argument("--id-column", help="row identifier column")


def _add_config(p):
    g = p.add_argument_group("model configuration")
    g.add_argument("--ntree", type=int, default=100)
    g.add_argument("--mtry", type=_mtry, default="S/3", help="integer, S, S/3 or sqrt (default: S/3)")
    g.add_argument("--bandwidth", type=int, help="number of neighbours in each local model")
    g.add_argument("--local-weight", type=float, default=0.5, help="weight of the local prediction (default: 0.5)")
    g.add_argument("--enable", type=_enable, default=set(), help="comma-separated subset of i1,i2,i3")
    g.add_argument("--min-leaf-size", type=int, default=1)


def _add_common(p, *, fmt=True, default_format="json"):
    p.add_argument("-o", "--output", required=True, help="output path")
    if fmt:
        p.add_argument("--format", choices=("json", "csv"), default=default_format)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=_workers, help="worker threads (default: GEORF_WORKERS or all cores)")
    p.add_argument("--timing", action="store_true", help="include wall-clock times in reports")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="georf", description="Geographical random forest regression.")
    parser.add_argument("--version", action="version", version=f"georf {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("fit", help="fit a model and save it")
    _add_data(p)
    _add_config(p)
    _add_common(p, fmt=False)

    p = sub.add_parser("predict", help="predict with a saved model")
    p.add_argument("data", help="CSV with coordinates and feature columns")
    p.add_argument("--model", required=True)
    p.add_argument("--x", help="x column (default: as in training)")
    p.add_argument("--y", help="y column (default: as in training)")
    p.add_argument("--id-column")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    p.add_argument("--workers", type=_workers, help=argparse.SUPPRESS)

    p = sub.add_parser("cv", help="k-fold cross-validation")
    _add_data(p)
    _add_config(p)
    _add_common(p)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--model-kind", choices=("grf", "rf"), default="grf")

    p = sub.add_parser("tune", help="hyperparameter tuning by grid search or autocorrelation")
    _add_data(p)
    _add_config(p)
    _add_common(p)
    p.add_argument("--method", choices=("grid", "isa"), required=True)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--grid-ntree", type=_csv_list(int))
    p.add_argument("--grid-mtry", type=_csv_list(_mtry))
    p.add_argument("--grid-bandwidth", type=_csv_list(int))
    p.add_argument("--grid-local-weight", type=_csv_list(float))
    p.add_argument("--k-min", type=int)
    p.add_argument("--k-max", type=int)
    p.add_argument("--k-step", type=int, default=1)
    p.add_argument("--significance", type=float, default=0.05)

    p = sub.add_parser("isa", help="Moran's I over a range of neighbour counts")
    _add_data(p)
    _add_common(p)
    p.add_argument("--k-min", type=int)
    p.add_argument("--k-max", type=int)
    p.add_argument("--k-step", type=int, default=1)
    p.add_argument("--significance", type=float, default=0.05)

    p = sub.add_parser("importance", help="export global and local feature importance")
    p.add_argument("--model", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--format", choices=("json", "csv"), default="csv")

    p = sub.add_parser("experiment", help="compare RF, GRF and each improvement under one CV")
    _add_data(p)
    _add_config(p)
    _add_common(p)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--grid-ntree", type=_csv_list(int))
    p.add_argument("--grid-mtry", type=_csv_list(_mtry))
    p.add_argument("--grid-bandwidth", type=_csv_list(int))
    p.add_argument("--grid-local-weight", type=_csv_list(float))

    # not listed in the help text
    p = sub.add_parser("synth")
    p.add_argument("kind", choices=("clustered", "quadrants", "field", "outliers", "checkerboard"))
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, help="number of rows (quadrants, field, outliers)")
    p.add_argument("--clusters", type=int, default=6)
    p.add_argument("--cluster-size", type=int, default=11)
    p.add_argument("--side", type=int, default=12)
    p.add_argument("--fraction", type=float, default=0.01)
    return parser


def _config(args) -> GrfConfig:
    return GrfConfig(
        ntree=args.ntree,
        mtry=args.mtry,
        bandwidth_lambda=args.bandwidth,
        local_weight_alpha=args.local_weight,
        enable_i1="i1" in args.enable,
        enable_i2="i2" in args.enable,
        enable_i3="i3" in args.enable,
        base_seed=args.seed,
        min_leaf_size=args.min_leaf_size,
    )


def _load(args) -> SpatialDataset:
    data = load_csv(args.data, target=args.target, x=args.x, y=args.y, features=args.features, id_column=args.id_column)
    for w in data.warnings:
        print(f"georf: warning: {w}", file=sys.stderr)
    return data


def _grids(args, data: SpatialDataset) -> dict:
    grids = default_grids(data.n, data.n_features, args.folds)
    for key, attr in (("ntree", "grid_ntree"), ("mtry", "grid_mtry"), ("lambda", "grid_bandwidth"), ("alpha", "grid_local_weight")):
        value = getattr(args, attr)
        if value is not None:
            grids[key] = value
    return grids


def _write_report(args, obj: dict, table=None) -> None:
    if args.format == "json":
        write_json(args.output, obj)
    else:
        header, rows = table
        write_csv(args.output, header, rows)


def _cmd_fit(args):
    data = _load(args)
    model = fit_grf(data, _config(args), workers=args.workers)
    columns = {"x": args.x, "y": args.y, "target": args.target, "features": list(data.feature_names)}
    save_model(model, args.output, extra_metadata={"columns": columns})


def _cmd_predict(args):
    model = load_model(args.model)
    cols = read_metadata(args.model).get("metadata", {}).get("columns", {})
    x = args.x or cols.get("x", "x")
    y = args.y or cols.get("y", "y")
    coords, X, ids = load_points_csv(args.data, x=x, y=y, features=model.feature_names, id_column=args.id_column)
    out = predict_grf(model, coords, X)
    header = ["id", "combined", "local", "global"]
    rows = list(zip(ids, out["combined"].tolist(), out["local"].tolist(), out["global"].tolist()))
    if args.format == "json":
        write_json(args.output, {"predictions": [dict(zip(header, r)) for r in rows]})
    else:
        write_csv(args.output, header, rows)


def _cmd_cv(args):
    data = _load(args)
    report = kfold_cv(data, _config(args), args.folds, args.seed, model=args.model_kind, workers=args.workers)
    header = ["row", "fold", "observed", "predicted", "local", "global"]
    loc = report.local_predictions if report.local_predictions is not None else np.full(data.n, np.nan)
    glob = report.global_predictions if report.global_predictions is not None else np.full(data.n, np.nan)
    rows = zip(data.row_ids, report.fold_assignment.tolist(), data.target.tolist(), report.predictions.tolist(), loc.tolist(), glob.tolist())
    _write_report(args, cv_report_to_dict(report, timing=args.timing), (header, rows))


def _cmd_tune(args):
    data = _load(args)
    base = _config(args)
    grids = _grids(args, data)
    if args.method == "grid":
        report = grid_search(data, grids, args.folds, args.seed, base_config=base, workers=args.workers)
    else:
        report = isa_tune(
            data, {"ntree": grids["ntree"], "mtry": grids["mtry"]}, args.folds, args.seed,
            base_config=base, k_min=args.k_min, k_max=args.k_max, k_step=args.k_step,
            significance=args.significance, workers=args.workers,
        )
    header = ["ntree", "mtry", "bandwidth_lambda", "local_weight_alpha", "pooled_rmse", "pooled_r2"]
    rows = ([r[h] for h in header] for r in report.leaderboard)
    _write_report(args, tune_report_to_dict(report, timing=args.timing), (header, rows))


def _cmd_isa(args):
    data = _load(args)
    scan = isa_scan(data, k_min=args.k_min, k_max=args.k_max, k_step=args.k_step, significance=args.significance)
    _write_report(args, isa_to_dict(scan), isa_rows(scan))


def _cmd_importance(args):
    export_importance(importance_table(load_model(args.model)), args.output, args.format)


def _cmd_experiment(args):
    data = _load(args)
    result = run_experiments(data, _grids(args, data), args.folds, args.seed, base_config=_config(args), workers=args.workers)
    tuning = result["tuning"]
    if not args.timing:
        for v in tuning.values():
            v.pop("wall_time")
    header = list(result["rows"][0])
    _write_report(args, {"rows": result["rows"], "tuning": tuning}, (header, ([r[h] for h in header] for r in result["rows"])))


def _cmd_synth(args):
    if args.kind == "clustered":
        data = make_clustered(args.clusters, args.cluster_size, args.seed)
    elif args.kind == "quadrants":
        data = make_quadrants(args.n or 200, args.seed)
    elif args.kind == "field":
        data = make_spatial_field(args.n or 300, args.seed)
    elif args.kind == "outliers":
        data, _ = inject_outliers(make_spatial_field(args.n or 300, args.seed), args.fraction, args.seed)
    else:
        data = make_checkerboard(args.side, args.seed)
    write_dataset_csv(data, args.output)


_HANDLERS = {
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "cv": _cmd_cv,
    "tune": _cmd_tune,
    "isa": _cmd_isa,
    "importance": _cmd_importance,
    "experiment": _cmd_experiment,
    "synth": _cmd_synth,
}


def run(argv=None) -> int:
    """Run one command and return the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    out = getattr(args, "output", None)
    try:
        if out is not None and not Path(out).resolve().parent.is_dir():
            raise FileNotFoundError(f"output directory does not exist: {Path(out).parent}")
        _HANDLERS[args.command](args)
    except (GeorfError, OSError) as exc:
        msg = " ".join(str(exc).split())
        print(f"georf: error: {msg}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
