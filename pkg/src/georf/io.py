"""CSV/JSON input and output.

Numbers are written with ``repr``, the shortest decimal that round-trips a
float64, and never with locale-dependent separators. Report files carry no
timestamps or timings unless asked, so reruns produce identical bytes.
"""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np

from .data import GrfConfig, SpatialDataset, validate_dataset
from .errors import GeorfError, MissingColumn
from .evaluation import CvReport, TuneReport
from .grf import ImportanceTable
from .spatial import IsaScanResult


def _read_rows(path) -> tuple[list[str], list[dict]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = list(reader.fieldnames or [])
        rows = list(reader)
    return header, rows


def load_csv(
    path,
    *,
    target: str,
    x: str,
    y: str,
    features: Sequence[str] | None = None,
    id_column: str | None = None,
) -> SpatialDataset:
    """Read a UTF-8 CSV with a header row into a validated dataset.

    Column order in the file does not matter. ``features`` defaults to every
    column other than the target, coordinates and id column.
    """
    header, rows = _read_rows(path)
    for col in [target, x, y, *(features or []), *([id_column] if id_column else [])]:
        if col not in header:
            raise MissingColumn(col)
    return validate_dataset(rows, target=target, x=x, y=y, features=features, id_column=id_column)


def load_points_csv(path, *, x: str, y: str, features: Sequence[str], id_column: str | None = None):
    """Read coordinates and features for prediction; the target is not needed.

    Returns ``(coords, X, ids)``.
    """
    from .data import _to_float

    header, rows = _read_rows(path)
    for col in [x, y, *features, *([id_column] if id_column else [])]:
        if col not in header:
            raise MissingColumn(col)
    if not rows:
        raise GeorfError(f"{path}: no data rows")
    coords = np.empty((len(rows), 2))
    X = np.empty((len(rows), len(features)))
    ids = []
    for r, row in enumerate(rows, start=1):
        coords[r - 1] = (_to_float(row[x], r, x), _to_float(row[y], r, y))
        X[r - 1] = [_to_float(row[f], r, f) for f in features]
        ids.append(row[id_column] if id_column else r - 1)
    return coords, X, ids


def fmt(value) -> str:
    """Format one CSV cell."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "" if math.isnan(v) else repr(v)
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def jsonable(obj):
    """Convert numpy scalars/arrays and NaN into plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if not math.isfinite(v) else v
    if isinstance(obj, GrfConfig):
        return jsonable(obj.to_dict())
    return obj


def write_json(path, obj) -> None:
    text = json.dumps(jsonable(obj), indent=2, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def write_dataset_csv(
    data: SpatialDataset,
    path,
    *,
    target: str = "target",
    x: str = "x",
    y: str = "y",
    id_column: str | None = None,
) -> None:
    header = ([id_column] if id_column else []) + [x, y, *data.feature_names, target]
    rows = (
        ([rid] if id_column else []) + [c[0], c[1], *feats, t]
        for rid, c, feats, t in zip(data.row_ids, data.coords, data.features, data.target)
    )
    write_csv(path, header, rows)


def importance_to_geojson(table: ImportanceTable) -> dict:
    features = []
    for i, ((x, y), imp) in enumerate(zip(table.anchor_coords, table.local_importance)):
        props = {"anchor_index": i}
        if table.anchor_ids:
            props["anchor_id"] = table.anchor_ids[i]
        props.update({name: float(v) for name, v in zip(table.feature_names, imp)})
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [float(x), float(y)]},
                "properties": props,
            }
        )
    return {
        "type": "FeatureCollection",
        "feature_names": list(table.feature_names),
        "global_importance": {n: float(v) for n, v in zip(table.feature_names, table.global_importance)},
        "features": features,
    }


def export_importance(table: ImportanceTable, path, format: str = "csv") -> None:
    """Write global and per-anchor importance.

    CSV: columns ``x, y, <features...>``; the first data row is the global
    importance with empty coordinates, followed by one row per anchor.
    JSON: a GeoJSON FeatureCollection of anchor points whose properties hold
    the local importance, with the global vector as a top-level member.
    """
    if format == "csv":
        rows = [["", "", *table.global_importance]]
        rows += [[c[0], c[1], *imp] for c, imp in zip(table.anchor_coords, table.local_importance)]
        write_csv(path, ["x", "y", *table.feature_names], rows)
    elif format == "json":
        write_json(path, importance_to_geojson(table))
    else:
        raise GeorfError(f"unknown format {format!r}")


def cv_report_to_dict(report: CvReport, *, timing: bool = False) -> dict:
    out = {
        "model": report.model,
        "config": report.config,
        "pooled_r2": report.pooled_r2,
        "pooled_rmse": report.pooled_rmse,
        "models_fitted": report.models_fitted,
        "per_fold": report.per_fold,
        "fold_assignment": report.fold_assignment,
    }
    if timing:
        out["wall_time"] = report.wall_time
    return out


def isa_to_dict(isa: IsaScanResult) -> dict:
    return {
        "selected_lambda": isa.selected_lambda,
        "selected_alpha": isa.selected_alpha,
        "significance": isa.significance,
        "results": [
            {"k": r.k, "I": r.I, "expected_I": r.expected_I, "z_score": r.z_score, "p_value": r.p_value}
            for r in isa.results
        ],
    }


def isa_rows(isa: IsaScanResult):
    header = ["k", "I", "expected_I", "z_score", "p_value", "selected"]
    rows = [
        [r.k, r.I, r.expected_I, r.z_score, r.p_value, r.k == isa.selected_lambda]
        for r in isa.results
    ]
    return header, rows


def tune_report_to_dict(report: TuneReport, *, timing: bool = False) -> dict:
    out = {
        "method": report.method,
        "chosen": report.chosen,
        "candidates_evaluated": report.candidates_evaluated,
        "grf_fits_performed": report.grf_fits_performed,
        "leaderboard": report.leaderboard,
    }
    if report.isa is not None:
        out["isa"] = {
            "selected_lambda": report.isa.selected_lambda,
            "selected_alpha": report.isa.selected_alpha,
        }
    if timing:
        out["wall_time"] = report.wall_time
    return out
