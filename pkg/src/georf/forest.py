"""Bagged regression forests built from :mod:`georf.tree`.

A forest keeps its trees packed in flat node arrays (child indices relative to
the owning tree) so that prediction for many rows, or for many forests at
once, is a single compiled loop.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np
from numba import njit

from ._seeding import tree_seeds
from .data import GrfConfig, SpatialDataset, resolve_mtry
from .errors import AllWeightsZero, DimensionMismatch, GeorfError
from .tree import RegressionTree, _bootstrap, _build, _prepare_fit


def _cumulative(weights, n):
    if weights is None:
        return np.empty(0), n - 1
    w = np.ascontiguousarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise DimensionMismatch(f"expected {n} weights, got shape {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise GeorfError("weights must be finite and nonnegative")
    positive = np.flatnonzero(w > 0)
    if positive.size == 0:
        raise AllWeightsZero("every bootstrap weight is zero")
    return np.cumsum(w), int(positive[-1])


@njit(cache=True, nogil=True)
def _weighted_draw(n, cum_w, last, size, seed):
    out = _bootstrap(n, cum_w, size, seed)
    if cum_w.shape[0] > 0:
        # float rounding at the top of the range must not land on a zero-weight tail
        for i in range(size):
            if out[i] > last:
                out[i] = last
    return out


def bootstrap_sample(n: int, weights=None, size: int | None = None, seed: int = 0) -> np.ndarray:
    """Draw ``size`` row indices from ``range(n)`` with replacement.

    Uniform when ``weights`` is None, otherwise with probability proportional
    to weight. Deterministic for a given seed.
    """
    if n < 1:
        raise GeorfError("n must be at least 1")
    size = n if size is None else int(size)
    if size < 1:
        raise GeorfError("size must be at least 1")
    cum_w, last = _cumulative(weights, n)
    return _weighted_draw(n, cum_w, last, size, np.uint64(seed & (2**64 - 1)))


@njit(cache=True, nogil=True)
def _fit_trees(X, y, w, cum_w, last, size, mtry, min_leaf, boot_seeds, split_seeds):
    ntree = boot_seeds.shape[0]
    n, n_feat = X.shape
    cap = ntree * (2 * size - 1)
    feature = np.empty(cap, dtype=np.int64)
    threshold = np.empty(cap)
    left = np.empty(cap, dtype=np.int64)
    right = np.empty(cap, dtype=np.int64)
    value = np.empty(cap)
    offsets = np.zeros(ntree + 1, dtype=np.int64)
    importance = np.zeros((ntree, n_feat))
    pos = 0
    for t in range(ntree):
        idx = _weighted_draw(n, cum_w, last, size, boot_seeds[t])
        f, th, l, r, v, imp = _build(X[idx], y[idx], w[idx], mtry, min_leaf, split_seeds[t])
        k = f.shape[0]
        feature[pos:pos + k] = f
        threshold[pos:pos + k] = th
        left[pos:pos + k] = l
        right[pos:pos + k] = r
        value[pos:pos + k] = v
        importance[t] = imp
        pos += k
        offsets[t + 1] = pos
    return (
        feature[:pos].copy(),
        threshold[:pos].copy(),
        left[:pos].copy(),
        right[:pos].copy(),
        value[:pos].copy(),
        offsets,
        importance,
    )


@njit(cache=True, nogil=True)
def _predict_forests(feature, threshold, left, right, value, tree_offsets, forest_ptr, forest_ids, X):
    """Row ``i`` is predicted by forest ``forest_ids[i]`` (mean over its trees)."""
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        fid = forest_ids[i]
        t0 = forest_ptr[fid]
        t1 = forest_ptr[fid + 1]
        s = 0.0
        for t in range(t0, t1):
            off = tree_offsets[t]
            node = 0
            while feature[off + node] >= 0:
                if X[i, feature[off + node]] <= threshold[off + node]:
                    node = left[off + node]
                else:
                    node = right[off + node]
            s += value[off + node]
        out[i] = s / (t1 - t0)
    return out


@njit(cache=True, nogil=True)
def _per_tree_predictions(feature, threshold, left, right, value, tree_offsets, X):
    ntree = tree_offsets.shape[0] - 1
    out = np.empty((X.shape[0], ntree))
    for i in range(X.shape[0]):
        for t in range(ntree):
            off = tree_offsets[t]
            node = 0
            while feature[off + node] >= 0:
                if X[i, feature[off + node]] <= threshold[off + node]:
                    node = left[off + node]
                else:
                    node = right[off + node]
            out[i, t] = value[off + node]
    return out


def normalize_importance(raw: np.ndarray) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    total = raw.sum()
    if not total > 0:
        return np.zeros_like(raw)
    return raw / total


class RandomForest:
    """A fitted forest: ``ntree`` trees plus normalised impurity importance.

    ``importance`` sums to one, or is all zero when no tree made a split.
    """

    def __init__(self, feature, threshold, left, right, value, tree_offsets, tree_importance, mtry):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.value = value
        self.tree_offsets = tree_offsets
        self.tree_importance = tree_importance
        self.mtry = int(mtry)
        self.importance = normalize_importance(tree_importance.sum(axis=0))
        for arr in (feature, threshold, left, right, value, tree_offsets, tree_importance, self.importance):
            arr.setflags(write=False)

    @property
    def ntree(self) -> int:
        return self.tree_offsets.shape[0] - 1

    @property
    def n_features(self) -> int:
        return self.tree_importance.shape[1]

    @cached_property
    def trees(self) -> list[RegressionTree]:
        out = []
        for t in range(self.ntree):
            a, b = self.tree_offsets[t], self.tree_offsets[t + 1]
            out.append(
                RegressionTree(
                    self.feature[a:b],
                    self.threshold[a:b],
                    self.left[a:b],
                    self.right[a:b],
                    self.value[a:b],
                    self.tree_importance[t],
                )
            )
        return out

    def _rows(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"expected rows with {self.n_features} features, got shape {X.shape}"
            )
        return np.ascontiguousarray(X)

    def predict(self, X) -> np.ndarray:
        X = self._rows(X)
        ptr = np.array([0, self.ntree], dtype=np.int64)
        ids = np.zeros(X.shape[0], dtype=np.int64)
        return _predict_forests(
            self.feature, self.threshold, self.left, self.right, self.value,
            self.tree_offsets, ptr, ids, X,
        )

    def predict_per_tree(self, X) -> np.ndarray:
        X = self._rows(X)
        return _per_tree_predictions(
            self.feature, self.threshold, self.left, self.right, self.value,
            self.tree_offsets, X,
        )

    def to_arrays(self) -> dict:
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "value": self.value,
            "tree_offsets": self.tree_offsets,
            "tree_importance": self.tree_importance,
        }


class ForestPack:
    """Several forests concatenated for batched prediction."""

    def __init__(self, forests: list[RandomForest]):
        if not forests:
            raise GeorfError("cannot pack zero forests")
        node_base = np.cumsum([0] + [f.feature.shape[0] for f in forests[:-1]])
        self.feature = np.concatenate([f.feature for f in forests])
        self.threshold = np.concatenate([f.threshold for f in forests])
        self.left = np.concatenate([f.left for f in forests])
        self.right = np.concatenate([f.right for f in forests])
        self.value = np.concatenate([f.value for f in forests])
        self.tree_offsets = np.concatenate(
            [f.tree_offsets[:-1] + base for f, base in zip(forests, node_base)]
            + [np.array([self.feature.shape[0]], dtype=np.int64)]
        )
        self.forest_ptr = np.cumsum([0] + [f.ntree for f in forests]).astype(np.int64)
        self.n_features = forests[0].n_features

    def predict(self, forest_ids, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"expected rows with {self.n_features} features, got shape {X.shape}"
            )
        return _predict_forests(
            self.feature, self.threshold, self.left, self.right, self.value,
            self.tree_offsets, self.forest_ptr,
            np.ascontiguousarray(forest_ids, dtype=np.int64), X,
        )


def fit_forest_arrays(X, y, weights=None, *, ntree: int, mtry: int, min_leaf_size: int = 1, seed: int = 0) -> RandomForest:
    """Fit a forest on raw arrays.

    Tree ``t`` draws a bootstrap sample of ``len(y)`` rows (weighted when
    ``weights`` is given) and fits on it with the drawn rows' weights as
    impurity weights. Per-tree seeds come from :func:`tree_seeds`, so tree
    ``t`` is identical no matter how the work is scheduled.
    """
    X, y, w = _prepare_fit(X, y, weights)
    n = y.shape[0]
    if n < 1:
        raise GeorfError("cannot fit a forest on zero rows")
    if not 1 <= mtry <= X.shape[1]:
        raise GeorfError(f"mtry={mtry} outside [1, {X.shape[1]}]")
    if ntree < 1:
        raise GeorfError("ntree must be positive")
    cum_w, last = _cumulative(weights, n)
    seeds = [tree_seeds(seed, t) for t in range(ntree)]
    boot = np.array([s[0] for s in seeds], dtype=np.uint64)
    split = np.array([s[1] for s in seeds], dtype=np.uint64)
    arrays = _fit_trees(X, y, w, cum_w, last, n, int(mtry), int(min_leaf_size), boot, split)
    return RandomForest(*arrays, mtry=mtry)


def fit_forest(data: SpatialDataset, weights=None, config: GrfConfig | None = None, seed: int | None = None) -> RandomForest:
    """Fit a random forest on a dataset using ``config``'s ntree/mtry/min_leaf_size."""
    config = config or GrfConfig()
    seed = config.base_seed if seed is None else seed
    return fit_forest_arrays(
        data.features,
        data.target,
        weights,
        ntree=config.ntree,
        mtry=resolve_mtry(config.mtry, data.n_features),
        min_leaf_size=config.min_leaf_size,
        seed=seed,
    )


def predict_forest(forest: RandomForest, row) -> float | np.ndarray:
    """Unweighted mean of tree predictions; float for one row, array for a batch."""
    arr = np.asarray(row, dtype=np.float64)
    out = forest.predict(arr)
    return float(out[0]) if arr.ndim == 1 else out
