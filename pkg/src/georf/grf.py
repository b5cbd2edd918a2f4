"""Geographical random forest: one global forest plus a local forest per anchor.

Each training row anchors a local forest fitted on its ``bandwidth_lambda``
nearest rows, weighted by a bisquare kernel. Predictions blend the local and
global forests with the local weight ``alpha``. Three optional switches:

* ``enable_i1`` picks bandwidth and local weight from an incremental Moran's I
  scan of the target instead of taking them from the config;
* ``enable_i2`` bootstraps small local training sets up to
  ``min(2 * ntree, 2 * |D|)`` rows;
* ``enable_i3`` predicts locally with a kernel-weighted mean over the
  ``bandwidth_lambda`` nearest local forests instead of the single nearest.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from joblib import Parallel, delayed

from ._seeding import derive_seed
from .data import GrfConfig, SpatialDataset, resolve_mtry
from .errors import BandwidthTooLarge, GeorfError, ModelNotFitted
from .forest import ForestPack, RandomForest, bootstrap_sample, fit_forest_arrays
from .spatial import IsaScanResult, NeighborIndex, isa_scan

log = logging.getLogger(__name__)

# keeps the farthest neighbour's kernel weight off zero
KERNEL_FLOOR = 1e-8


def resolve_workers(workers=None, config: GrfConfig | None = None) -> int:
    if workers is None:
        workers = config.parallelism if config is not None else "auto"
    if workers == "auto":
        env = os.environ.get("GEORF_WORKERS")
        workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(workers))


def expand_local_samples(local_rows, ntree: int, seed: int) -> np.ndarray:
    """Grow a small local training set by bootstrapping.

    If ``len(local_rows) < 2 * ntree`` returns ``min(2 * ntree, 2 * len(local_rows))``
    rows drawn uniformly with replacement from ``local_rows``; otherwise
    returns ``local_rows`` unchanged.

    >>> len(expand_local_samples(range(10), 100, 0))
    20
    >>> len(expand_local_samples(range(300), 100, 0))
    300
    """
    rows = np.asarray(local_rows, dtype=np.int64)
    size = rows.shape[0]
    if size < 1 or ntree < 1:
        raise GeorfError("need at least one local row and one tree")
    if size >= 2 * ntree:
        return rows
    target = min(2 * ntree, 2 * size)
    return rows[bootstrap_sample(size, None, target, seed)]


def kernel_weights(distances: np.ndarray) -> np.ndarray:
    """Bisquare weights with the bandwidth set at the farthest distance of each row.

    ``distances`` is ``(m, k)`` sorted ascending along axis 1. Weights at the
    bandwidth edge are floored at ``KERNEL_FLOOR``; a row whose neighbours all
    sit at distance 0 gets equal weights.
    """
    d = np.atleast_2d(np.asarray(distances, dtype=np.float64))
    b = d[:, -1]
    w = np.ones_like(d)
    pos = b > 0
    if pos.any():
        u = d[pos] / b[pos, None]
        w[pos] = np.where(u < 1.0, (1.0 - u * u) ** 2, 0.0)
    return np.maximum(w, KERNEL_FLOOR)


def weighted_local_mean(weights, predictions) -> np.ndarray:
    """Kernel-weighted mean of local-model predictions, row by row."""
    w = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    p = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    w = w / np.sum(w, axis=1, keepdims=True)
    return np.sum(w * p, axis=1)


def spatially_weighted_prediction(distances, predictions) -> np.ndarray:
    """Local prediction from several local models at the given distances."""
    return weighted_local_mean(kernel_weights(distances), predictions)


@dataclass(frozen=True)
class LocalModel:
    anchor_index: int
    anchor_coord: tuple[float, float]
    forest: RandomForest
    sample_size: int
    expanded: bool

    @property
    def local_importance(self) -> np.ndarray:
        return self.forest.importance


@dataclass(frozen=True, eq=False)
class ImportanceTable:
    feature_names: tuple[str, ...]
    global_importance: np.ndarray
    anchor_coords: np.ndarray
    local_importance: np.ndarray
    anchor_ids: tuple = ()


@dataclass(eq=False)
class TrainedGrf:
    """A fitted model. ``config`` holds the bandwidth and local weight actually used."""

    config: GrfConfig
    feature_names: tuple[str, ...]
    global_forest: RandomForest
    local_forests: list[RandomForest]
    anchor_coords: np.ndarray
    anchor_ids: tuple
    sample_sizes: np.ndarray
    expanded: np.ndarray
    isa: IsaScanResult | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def n_anchors(self) -> int:
        return len(self.local_forests)

    @property
    def mtry(self) -> int:
        return self.global_forest.mtry

    @property
    def training_stats(self) -> dict:
        return {
            "expanded_count": int(self.expanded.sum()),
            "sample_sizes": [int(s) for s in self.sample_sizes],
        }

    @property
    def local_models(self) -> list[LocalModel]:
        return [
            LocalModel(i, (float(x), float(y)), f, int(s), bool(e))
            for i, ((x, y), f, s, e) in enumerate(
                zip(self.anchor_coords, self.local_forests, self.sample_sizes, self.expanded)
            )
        ]

    @cached_property
    def neighbor_index(self) -> NeighborIndex:
        return NeighborIndex(self.anchor_coords)

    @cached_property
    def _pack(self) -> ForestPack:
        return ForestPack(self.local_forests)

    def _check(self):
        if not self.local_forests or self.global_forest is None:
            raise ModelNotFitted("model has no fitted forests")


def _local_neighborhoods(index: NeighborIndex, lam: int, include_anchor: bool):
    n = index.n
    if include_anchor:
        idx, dist = index.query_many(index.coords, lam - 1, exclude_self=True)
        idx = np.hstack([np.arange(n)[:, None], idx])
        dist = np.hstack([np.zeros((n, 1)), dist])
    else:
        idx, dist = index.query_many(index.coords, lam, exclude_self=True)
    return idx, dist


def _fit_local(X, y, rows, dist, config: GrfConfig, mtry: int, anchor: int):
    w = kernel_weights(dist)[0]
    expanded = False
    if config.enable_i2:
        pos = expand_local_samples(
            np.arange(rows.shape[0]), config.ntree, derive_seed(config.base_seed, "expand", anchor)
        )
        expanded = pos.shape[0] != rows.shape[0]
        rows, w = rows[pos], w[pos]
    forest = fit_forest_arrays(
        X[rows], y[rows], w,
        ntree=config.ntree,
        mtry=mtry,
        min_leaf_size=config.min_leaf_size,
        seed=derive_seed(config.base_seed, "local", anchor),
    )
    return forest, rows.shape[0], expanded


def fit_grf(data: SpatialDataset, config: GrfConfig, workers=None) -> TrainedGrf:
    """Fit the global forest and one local forest per row of ``data``.

    Local forests are seeded from ``(base_seed, anchor index)`` and the global
    forest from ``base_seed``, so the fitted model does not depend on the
    number of workers. With ``enable_i1`` the bandwidth and local weight are
    replaced by the result of :func:`georf.spatial.isa_scan` on ``data``.
    """
    isa = None
    if config.enable_i1:
        isa = isa_scan(data)
        config = config.replace(
            bandwidth_lambda=isa.selected_lambda, local_weight_alpha=isa.selected_alpha
        )
    lam = config.bandwidth_lambda
    if lam is None:
        raise GeorfError("bandwidth_lambda is required unless enable_i1 is set")
    if lam > data.n - 1:
        raise BandwidthTooLarge(f"bandwidth {lam} exceeds n-1={data.n - 1}")
    mtry = resolve_mtry(config.mtry, data.n_features)
    X, y = data.features, data.target

    global_forest = fit_forest_arrays(
        X, y, None, ntree=config.ntree, mtry=mtry,
        min_leaf_size=config.min_leaf_size, seed=config.base_seed,
    )
    index = NeighborIndex(data.coords)
    nb_idx, nb_dist = _local_neighborhoods(index, lam, config.include_anchor)

    def fit_chunk(anchors):
        return [_fit_local(X, y, nb_idx[i], nb_dist[i:i + 1], config, mtry, i) for i in anchors]

    n_jobs = resolve_workers(workers, config)
    anchors = np.arange(data.n)
    if n_jobs == 1:
        results = fit_chunk(anchors)
    else:
        chunks = np.array_split(anchors, min(data.n, n_jobs * 4))
        parts = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(fit_chunk)(c) for c in chunks)
        results = [r for part in parts for r in part]

    model = TrainedGrf(
        config=config,
        feature_names=data.feature_names,
        global_forest=global_forest,
        local_forests=[r[0] for r in results],
        anchor_coords=np.array(data.coords),
        anchor_ids=tuple(data.row_ids),
        sample_sizes=np.array([r[1] for r in results], dtype=np.int64),
        expanded=np.array([r[2] for r in results], dtype=bool),
        isa=isa,
    )
    model.neighbor_index  # built once here so prediction threads share it
    return model


def _as_batch(model: TrainedGrf, points, rows):
    pts = np.asarray(points, dtype=np.float64)
    X = np.asarray(rows, dtype=np.float64)
    single = X.ndim == 1
    pts = np.atleast_2d(pts)
    X = np.atleast_2d(X)
    if pts.shape[1] != 2 or pts.shape[0] != X.shape[0]:
        raise GeorfError(f"points {pts.shape} and rows {X.shape} disagree")
    return pts, np.ascontiguousarray(X), single


def _local_batch(model: TrainedGrf, pts, X) -> np.ndarray:
    if not model.config.enable_i3:
        ids, _ = model.neighbor_index.query_many(pts, 1)
        return model._pack.predict(ids[:, 0], X)
    k = min(model.config.bandwidth_lambda, model.n_anchors)
    ids, dist = model.neighbor_index.query_many(pts, k)
    preds = model._pack.predict(ids.ravel(), np.repeat(X, k, axis=0)).reshape(-1, k)
    return spatially_weighted_prediction(dist, preds)


def local_prediction(model: TrainedGrf, point, row):
    """Local-model prediction at ``point``.

    Without ``enable_i3`` this is the forest anchored nearest to ``point``
    (lower anchor index on ties). With it, the bisquare-weighted mean over the
    ``bandwidth_lambda`` nearest anchors.
    """
    model._check()
    pts, X, single = _as_batch(model, point, row)
    out = _local_batch(model, pts, X)
    return float(out[0]) if single else out


def predict_grf(model: TrainedGrf, point, row) -> dict:
    """``{"combined", "local", "global"}`` predictions.

    ``combined = alpha * local + (1 - alpha) * global``. One point and row give
    floats; ``(m, 2)`` points with ``(m, S)`` rows give arrays.
    """
    model._check()
    pts, X, single = _as_batch(model, point, row)
    glob = model.global_forest.predict(X)
    alpha = float(model.config.local_weight_alpha)
    loc = _local_batch(model, pts, X)
    combined = alpha * loc + (1.0 - alpha) * glob
    if single:
        return {"combined": float(combined[0]), "local": float(loc[0]), "global": float(glob[0])}
    return {"combined": combined, "local": loc, "global": glob}


def importance_table(model: TrainedGrf) -> ImportanceTable:
    """Global importance and one local importance vector per anchor."""
    model._check()
    local = np.vstack([f.importance for f in model.local_forests])
    return ImportanceTable(
        feature_names=model.feature_names,
        global_importance=model.global_forest.importance.copy(),
        anchor_coords=model.anchor_coords.copy(),
        local_importance=local,
        anchor_ids=model.anchor_ids,
    )
