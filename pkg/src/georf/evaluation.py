"""Metrics, k-fold cross-validation and hyperparameter tuning.

Cross-validated scores are pooled: R^2 and RMSE are computed once over the
concatenated out-of-fold predictions. Every fold is fitted with a seed
derived from ``(seed, fold)``, so two candidates scored in the same CV run
see the same randomness and results do not depend on the worker count.
"""

from __future__ import annotations

import itertools
import math
import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from ._seeding import derive_seed
from .data import GrfConfig, SpatialDataset, resolve_mtry
from .errors import EmptyGrid, GeorfError, LengthMismatch, TooFewRows, ZeroVariance
from .forest import fit_forest
from .grf import fit_grf, predict_grf
from .spatial import IsaScanResult, default_isa_range, isa_scan


def _pair(y, yhat):
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if y.shape != yhat.shape:
        raise LengthMismatch(f"{y.shape[0]} true values vs {yhat.shape[0]} predictions")
    return y, yhat


def r_squared(y, yhat) -> float:
    """Coefficient of determination, ``1 - SS_res / SS_tot``."""
    y, yhat = _pair(y, yhat)
    if y.shape[0] < 2:
        raise TooFewRows("R^2 needs at least two values")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        raise ZeroVariance("true values are constant")
    return 1.0 - float(np.sum((y - yhat) ** 2)) / ss_tot


def rmse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    if y.shape[0] < 1:
        raise TooFewRows("RMSE needs at least one value")
    return math.sqrt(float(np.sum((y - yhat) ** 2)) / y.shape[0])


def fold_assignment(n: int, folds: int, seed: int) -> np.ndarray:
    """Shuffled fold labels whose fold sizes differ by at most one."""
    if not 2 <= folds <= n:
        raise TooFewRows(f"need 2 <= folds <= n, got folds={folds}, n={n}")
    rng = np.random.default_rng(derive_seed(seed, "folds"))
    labels = np.empty(n, dtype=np.int64)
    labels[rng.permutation(n)] = np.arange(n) % folds
    return labels


@dataclass
class CvReport:
    per_fold: list[dict]
    pooled_r2: float
    pooled_rmse: float
    fold_assignment: np.ndarray
    wall_time: float
    models_fitted: int
    predictions: np.ndarray
    local_predictions: np.ndarray | None = None
    global_predictions: np.ndarray | None = None
    model: str = "grf"
    config: GrfConfig | None = None
    fold_configs: list[GrfConfig] = field(default_factory=list)


def _safe_r2(y, yhat) -> float:
    try:
        return r_squared(y, yhat)
    except (TooFewRows, ZeroVariance):
        return float("nan")


def kfold_cv(
    data: SpatialDataset,
    config: GrfConfig,
    folds: int = 10,
    seed: int = 0,
    *,
    model: str = "grf",
    workers=None,
) -> CvReport:
    """Cross-validate a GRF (``model="grf"``) or a plain forest (``model="rf"``).

    Fold ``f`` is fitted with ``base_seed = derive_seed(seed, "fold", f)``;
    ``config.base_seed`` is ignored here.
    """
    if model not in ("grf", "rf"):
        raise GeorfError(f"unknown model kind {model!r}")
    t0 = time.perf_counter()
    labels = fold_assignment(data.n, folds, seed)
    pred = np.empty(data.n)
    loc = np.empty(data.n) if model == "grf" else None
    glob = np.empty(data.n) if model == "grf" else None
    per_fold = []
    fold_configs = []
    for f in range(folds):
        test = np.flatnonzero(labels == f)
        train_rows = np.flatnonzero(labels != f)
        if train_rows.shape[0] < 2:
            raise TooFewRows(f"fold {f} leaves {train_rows.shape[0]} training rows")
        train = data.subset(train_rows)
        cfg = config.replace(base_seed=derive_seed(seed, "fold", f))
        if model == "rf":
            pred[test] = fit_forest(train, None, cfg).predict(data.features[test])
        else:
            fitted = fit_grf(train, cfg, workers=workers)
            cfg = fitted.config
            out = predict_grf(fitted, data.coords[test], data.features[test])
            pred[test], loc[test], glob[test] = out["combined"], out["local"], out["global"]
        fold_configs.append(cfg)
        per_fold.append(
            {
                "fold": f,
                "n_test": int(test.shape[0]),
                "r2": _safe_r2(data.target[test], pred[test]),
                "rmse": rmse(data.target[test], pred[test]),
            }
        )
    return CvReport(
        per_fold=per_fold,
        pooled_r2=r_squared(data.target, pred),
        pooled_rmse=rmse(data.target, pred),
        fold_assignment=labels,
        wall_time=time.perf_counter() - t0,
        models_fitted=folds,
        predictions=pred,
        local_predictions=loc,
        global_predictions=glob,
        model=model,
        config=config,
        fold_configs=fold_configs,
    )


@dataclass
class TuneReport:
    method: str
    chosen: GrfConfig
    candidates_evaluated: int
    grf_fits_performed: int
    wall_time: float
    leaderboard: list[dict]
    isa: IsaScanResult | None = None


def min_train_size(n: int, folds: int) -> int:
    return n - math.ceil(n / folds)


def mtry_choices(n_features: int) -> list:
    """``{S, S/3, sqrt(S)}`` as symbolic settings, deduplicated by resolved value; ``1..S`` for S <= 3."""
    if n_features <= 3:
        return list(range(1, n_features + 1))
    out, seen = [], set()
    for choice in ("S", "S/3", "sqrt"):
        v = resolve_mtry(choice, n_features)
        if v not in seen:
            seen.add(v)
            out.append(choice)
    return out


def default_grids(
    n: int,
    n_features: int,
    folds: int = 10,
    *,
    ntree_step: int = 20,
    lambda_step: int = 5,
) -> dict:
    """Search spaces following the trial-and-error GRF tuning convention.

    ``n`` is the full sample count; the ntree and bandwidth ranges are taken
    relative to the smallest CV training set so every candidate is valid in
    every fold.
    """
    n_train = min_train_size(n, folds)
    ntree = list(range(ntree_step, n_train // 2 + 1, ntree_step)) or [max(1, n_train // 2)]
    lo = max(2, math.ceil(0.05 * n_train))
    hi = min(n_train - 1, math.floor(0.95 * n_train))
    lam = list(range(lo, hi + 1, lambda_step)) or [lo]
    return {
        "ntree": ntree,
        "mtry": mtry_choices(n_features),
        "lambda": lam,
        "alpha": [0.25, 0.5, 0.75],
    }


def _grid(grids: Mapping, key: str) -> list:
    values = list(grids.get(key, []))
    if not values:
        raise EmptyGrid(f"grid {key!r} is empty")
    return values


def _leader_row(cfg: GrfConfig, report: CvReport) -> dict:
    return {
        "ntree": cfg.ntree,
        "mtry": cfg.mtry,
        "bandwidth_lambda": cfg.bandwidth_lambda,
        "local_weight_alpha": cfg.local_weight_alpha,
        "pooled_rmse": report.pooled_rmse,
        "pooled_r2": report.pooled_r2,
    }


def _pick(candidates: Sequence[GrfConfig], scores: Sequence[float], n_features: int) -> int:
    # cheapest model wins a tie: fewer trees, then a smaller bandwidth
    def key(i):
        c = candidates[i]
        return (scores[i], c.ntree, c.bandwidth_lambda or 0, resolve_mtry(c.mtry, n_features), c.local_weight_alpha, i)

    return min(range(len(candidates)), key=key)


def grid_search(
    data: SpatialDataset,
    grids: Mapping,
    folds: int = 10,
    seed: int = 0,
    *,
    base_config: GrfConfig | None = None,
    workers=None,
) -> TuneReport:
    """Exhaustive CV over ``ntree x mtry x lambda x alpha``; lowest pooled RMSE wins.

    Every candidate is a separate GRF fit per fold, so
    ``grf_fits_performed == folds * |product|``.
    """
    t0 = time.perf_counter()
    base = base_config or GrfConfig()
    product = list(
        itertools.product(
            _grid(grids, "ntree"), _grid(grids, "mtry"), _grid(grids, "lambda"), _grid(grids, "alpha")
        )
    )
    candidates, scores, board, fits = [], [], [], 0
    for ntree, mtry, lam, alpha in product:
        cfg = base.replace(
            ntree=int(ntree), mtry=mtry, bandwidth_lambda=int(lam),
            local_weight_alpha=float(alpha), enable_i1=False,
        )
        report = kfold_cv(data, cfg, folds, seed, workers=workers)
        fits += report.models_fitted
        candidates.append(cfg)
        scores.append(report.pooled_rmse)
        board.append(_leader_row(cfg, report))
    best = _pick(candidates, scores, data.n_features)
    return TuneReport(
        method="grid",
        chosen=candidates[best],
        candidates_evaluated=len(product),
        grf_fits_performed=fits,
        wall_time=time.perf_counter() - t0,
        leaderboard=board,
    )


def isa_tune(
    data: SpatialDataset,
    forest_grids: Mapping,
    folds: int = 10,
    seed: int = 0,
    *,
    base_config: GrfConfig | None = None,
    k_min: int | None = None,
    k_max: int | None = None,
    k_step: int = 1,
    significance: float = 0.05,
    workers=None,
) -> TuneReport:
    """Take bandwidth and local weight from :func:`isa_scan`, tune ntree/mtry by CV.

    The scan fits no GRF models. Its default range is capped at the smallest
    CV training size minus one so the chosen bandwidth is valid in every fold.
    """
    t0 = time.perf_counter()
    base = base_config or GrfConfig()
    lo, hi = default_isa_range(data.n)
    cap = min_train_size(data.n, folds) - 1
    scan = isa_scan(
        data,
        k_min=lo if k_min is None else k_min,
        k_max=min(hi, cap) if k_max is None else k_max,
        k_step=k_step,
        significance=significance,
    )
    product = list(itertools.product(_grid(forest_grids, "ntree"), _grid(forest_grids, "mtry")))
    candidates, scores, board, fits = [], [], [], 0
    for ntree, mtry in product:
        cfg = base.replace(
            ntree=int(ntree), mtry=mtry, bandwidth_lambda=scan.selected_lambda,
            local_weight_alpha=scan.selected_alpha, enable_i1=False,
        )
        report = kfold_cv(data, cfg, folds, seed, workers=workers)
        fits += report.models_fitted
        candidates.append(cfg)
        scores.append(report.pooled_rmse)
        board.append(_leader_row(cfg, report))
    best = _pick(candidates, scores, data.n_features)
    return TuneReport(
        method="isa",
        chosen=candidates[best],
        candidates_evaluated=len(product),
        grf_fits_performed=fits,
        wall_time=time.perf_counter() - t0,
        leaderboard=board,
        isa=scan,
    )


EXPERIMENT_VARIANTS = (
    ("comparison", "RF"),
    ("baseline", "GRF"),
    ("individual", "GRF+I1"),
    ("individual", "GRF+I2"),
    ("individual", "GRF+I3"),
    ("stepwise", "GRF+I1+I2"),
    ("stepwise", "GRF+I1+I2+I3"),
)


def run_experiments(
    data: SpatialDataset,
    grids: Mapping | None = None,
    folds: int = 10,
    seed: int = 0,
    *,
    base_config: GrfConfig | None = None,
    workers=None,
) -> dict:
    """Compare RF, tuned GRF and GRF with each improvement, all by the same CV.

    The grid-tuned ``(ntree, mtry, lambda, alpha)`` serve RF, GRF, GRF+I2 and
    GRF+I3. The I1 variants use the autocorrelation-derived ``(lambda, alpha)``
    with ntree/mtry tuned over the same forest grids.
    """
    base = base_config or GrfConfig()
    grids = dict(grids or default_grids(data.n, data.n_features, folds))
    grid_report = grid_search(data, grids, folds, seed, base_config=base, workers=workers)
    isa_report = isa_tune(
        data, {"ntree": grids["ntree"], "mtry": grids["mtry"]}, folds, seed,
        base_config=base, workers=workers,
    )
    g, i = grid_report.chosen, isa_report.chosen
    configs = {
        "RF": g,
        "GRF": g,
        "GRF+I1": i,
        "GRF+I2": g.replace(enable_i2=True),
        "GRF+I3": g.replace(enable_i3=True),
        "GRF+I1+I2": i.replace(enable_i2=True),
        "GRF+I1+I2+I3": i.replace(enable_i2=True, enable_i3=True),
    }
    rows = []
    for experiment, name in EXPERIMENT_VARIANTS:
        cfg = configs[name]
        report = kfold_cv(data, cfg, folds, seed, model="rf" if name == "RF" else "grf", workers=workers)
        rows.append(
            {
                "experiment": experiment,
                "model": name,
                "ntree": cfg.ntree,
                "mtry": cfg.mtry,
                "bandwidth_lambda": None if name == "RF" else cfg.bandwidth_lambda,
                "local_weight_alpha": None if name == "RF" else cfg.local_weight_alpha,
                "enable_i2": cfg.enable_i2,
                "enable_i3": cfg.enable_i3,
                "r2": report.pooled_r2,
                "rmse": report.pooled_rmse,
            }
        )
    return {
        "rows": rows,
        "tuning": {
            "grid": {
                "grf_fits_performed": grid_report.grf_fits_performed,
                "candidates_evaluated": grid_report.candidates_evaluated,
                "wall_time": grid_report.wall_time,
            },
            "isa": {
                "grf_fits_performed": isa_report.grf_fits_performed,
                "candidates_evaluated": isa_report.candidates_evaluated,
                "wall_time": isa_report.wall_time,
            },
        },
        "grid_report": grid_report,
        "isa_report": isa_report,
    }
