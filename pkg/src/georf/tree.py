"""Weighted CART regression trees.

Impurity is the weighted sum of squared deviations from the weighted node
mean. Candidate thresholds are midpoints between consecutive distinct feature
values; a split is taken only if it strictly beats every earlier candidate, so
ties go to the lowest feature index and then the lowest threshold.

The builder runs under numba with its own splitmix64 generator so that a tree
is a pure function of ``(X, y, w, mtry, min_leaf_size, seed)`` and can run on
worker threads without touching shared RNG state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import AllWeightsZero, DimensionMismatch, GeorfError

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True)
def _next_u64(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def _next_unit(state):
    return float(_next_u64(state) >> np.uint64(11)) * _INV53


@njit(cache=True, nogil=True)
def _bootstrap(n, cum_weights, size, seed):
    """Draw ``size`` indices in [0, n); weighted when ``cum_weights`` is non-empty."""
    state = np.empty(1, dtype=np.uint64)
    state[0] = seed
    out = np.empty(size, dtype=np.int64)
    weighted = cum_weights.shape[0] > 0
    total = cum_weights[n - 1] if weighted else 0.0
    for i in range(size):
        u = _next_unit(state)
        if weighted:
            j = np.searchsorted(cum_weights, u * total, side="right")
            out[i] = min(j, n - 1)
        else:
            out[i] = min(int(u * n), n - 1)
    return out


@njit(cache=True, nogil=True)
def _node_stats(y, w, rows):
    # shifting by the first target keeps a constant node's mean exact
    shift = y[rows[0]]
    lo = shift
    hi = shift
    sw = 0.0
    swd = 0.0
    for r in rows:
        sw += w[r]
        swd += w[r] * (y[r] - shift)
        lo = min(lo, y[r])
        hi = max(hi, y[r])
    mean = min(max(shift + swd / sw, lo), hi)
    sse = 0.0
    for r in rows:
        d = y[r] - mean
        sse += w[r] * d * d
    return sw, mean, sse


@njit(cache=True, nogil=True)
def _insertion_sort_int(a, k):
    for i in range(1, k):
        v = a[i]
        j = i - 1
        while j >= 0 and a[j] > v:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = v


@njit(cache=True, nogil=True)
def _sort_pairs(keys, payload, k):
    """Stable in-place sort of ``keys[:k]`` carrying ``payload[:k]`` along."""
    if k <= 24:
        for i in range(1, k):
            v = keys[i]
            pv = payload[i]
            j = i - 1
            while j >= 0 and keys[j] > v:
                keys[j + 1] = keys[j]
                payload[j + 1] = payload[j]
                j -= 1
            keys[j + 1] = v
            payload[j + 1] = pv
        return
    order = np.argsort(keys[:k], kind="mergesort")
    ks = keys[:k][order]
    ps = payload[:k][order]
    keys[:k] = ks
    payload[:k] = ps


@njit(cache=True, nogil=True)
def _build(X, y, w, mtry, min_leaf, seed):
    m, n_feat = X.shape
    max_nodes = 2 * m - 1
    feature = np.full(max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    value = np.zeros(max_nodes)
    importance = np.zeros(n_feat)

    state = np.empty(1, dtype=np.uint64)
    state[0] = seed
    feats = np.arange(n_feat)
    idx = np.arange(m)
    buf = np.empty(m, dtype=np.int64)
    chosen = np.empty(n_feat, dtype=np.int64)
    xs_buf = np.empty(m)
    ord_buf = np.empty(m, dtype=np.int64)

    stack_node = np.empty(max_nodes, dtype=np.int64)
    stack_start = np.empty(max_nodes, dtype=np.int64)
    stack_end = np.empty(max_nodes, dtype=np.int64)
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = m
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        rows = idx[start:end]
        cnt = end - start
        sw, mean, sse = _node_stats(y, w, rows)
        value[node] = mean
        if cnt < 2 * min_leaf or sse <= 0.0:
            continue
        ymin = y[rows[0]]
        ymax = ymin
        for r in rows:
            ymin = min(ymin, y[r])
            ymax = max(ymax, y[r])
        if ymin == ymax:
            continue

        # partial Fisher-Yates; the chosen subset is then scanned in index order
        for j in range(mtry):
            k = j + int(_next_u64(state) % np.uint64(n_feat - j))
            tmp = feats[j]
            feats[j] = feats[k]
            feats[k] = tmp
        for j in range(mtry):
            chosen[j] = feats[j]
        _insertion_sort_int(chosen, mtry)

        total_wy = 0.0
        for r in rows:
            total_wy += w[r] * (y[r] - mean)
        base = total_wy * total_wy / sw
        best_gain = 1e-12 * sse
        best_f = -1
        best_t = 0.0
        for jf in range(mtry):
            f = chosen[jf]
            for q in range(cnt):
                xs_buf[q] = X[rows[q], f]
                ord_buf[q] = rows[q]
            _sort_pairs(xs_buf, ord_buf, cnt)
            lw = 0.0
            lwy = 0.0
            for p in range(cnt - 1):
                r = ord_buf[p]
                lw += w[r]
                lwy += w[r] * (y[r] - mean)
                nl = p + 1
                if nl < min_leaf:
                    continue
                if cnt - nl < min_leaf:
                    break
                xa = xs_buf[p]
                xb = xs_buf[p + 1]
                if xa == xb:
                    continue
                rw = sw - lw
                rwy = total_wy - lwy
                gain = lwy * lwy / lw + rwy * rwy / rw - base
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    t = 0.5 * (xa + xb)
                    if t >= xb:
                        t = xa
                    best_t = t
        if best_f < 0:
            continue

        nl = 0
        nr = 0
        for r in rows:
            if X[r, best_f] <= best_t:
                idx[start + nl] = r
                nl += 1
            else:
                buf[nr] = r
                nr += 1
        for q in range(nr):
            idx[start + nl + q] = buf[q]

        _, _, sse_l = _node_stats(y, w, idx[start:start + nl])
        _, _, sse_r = _node_stats(y, w, idx[start + nl:end])
        importance[best_f] += sse - sse_l - sse_r

        feature[node] = best_f
        threshold[node] = best_t
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        # right pushed first so the left subtree is numbered depth-first
        stack_node[top] = rnode
        stack_start[top] = start + nl
        stack_end[top] = end
        top += 1
        stack_node[top] = lnode
        stack_start[top] = start
        stack_end[top] = start + nl
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        importance,
    )


@njit(cache=True, nogil=True)
def _predict(feature, threshold, left, right, value, X):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@njit(cache=True, nogil=True)
def _apply(feature, threshold, left, right, X):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@dataclass(frozen=True, eq=False)
class RegressionTree:
    """Fitted tree stored as parallel node arrays.

    Internal nodes have ``feature >= 0``; leaves have ``feature == -1`` and
    ``left == right == -1``. ``importance_raw[s]`` is the total weighted SSE
    decrease from splits on feature ``s``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    importance_raw: np.ndarray

    @property
    def n_features(self) -> int:
        return self.importance_raw.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        X = _check_rows(X, self.n_features)
        return _apply(self.feature, self.threshold, self.left, self.right, X)

    def predict(self, X) -> np.ndarray:
        X = _check_rows(X, self.n_features)
        return _predict(self.feature, self.threshold, self.left, self.right, self.value, X)


def _check_rows(X, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != n_features:
        raise DimensionMismatch(
            f"expected rows with {n_features} features, got shape {X.shape}"
        )
    return np.ascontiguousarray(X)


def _prepare_fit(X, y, weights):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"features {X.shape} and target {y.shape} disagree")
    if weights is None:
        w = np.ones(y.shape[0])
    else:
        w = np.ascontiguousarray(weights, dtype=np.float64)
        if w.shape != y.shape:
            raise DimensionMismatch(f"weights {w.shape} and target {y.shape} disagree")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise GeorfError("weights must be finite and nonnegative")
    return X, y, w


def fit_tree(X, y, weights=None, *, mtry: int, min_leaf_size: int = 1, seed: int = 0) -> RegressionTree:
    """Fit a weighted regression tree.

    Rows with zero weight are dropped before fitting; they would change
    neither impurities nor leaf values, only the candidate thresholds.
    Splitting stops when a node holds fewer than ``2 * min_leaf_size`` rows,
    its target is constant, or no candidate split lowers the impurity.
    """
    X, y, w = _prepare_fit(X, y, weights)
    keep = w > 0
    if not keep.any():
        raise AllWeightsZero("every row has zero weight")
    if not keep.all():
        X, y, w = X[keep], y[keep], w[keep]
    n_feat = X.shape[1]
    if not 1 <= mtry <= n_feat:
        raise GeorfError(f"mtry={mtry} outside [1, {n_feat}]")
    if min_leaf_size < 1:
        raise GeorfError("min_leaf_size must be positive")
    arrays = _build(X, y, w, int(mtry), int(min_leaf_size), np.uint64(seed & (2**64 - 1)))
    return RegressionTree(*arrays)


def predict_tree(tree: RegressionTree, row) -> float | np.ndarray:
    """Predict one row (returns a float) or a 2-D batch (returns an array)."""
    arr = np.asarray(row, dtype=np.float64)
    out = tree.predict(arr)
    return float(out[0]) if arr.ndim == 1 else out
