"""Neighbour search, kernel weights and global Moran's I.

Bandwidths are neighbour counts throughout. KNN results are ordered by
``(distance, row index)``, so coincident points resolve the same way on every
run and every platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree
from scipy.stats import norm

from .data import SpatialDataset
from .errors import (
    EmptyGrid,
    GeorfError,
    KTooLarge,
    NonPositiveBandwidthDistance,
    TooFewRows,
    ZeroVariance,
)

# below this size an exact stable sort over all points is cheaper than a tree
_BRUTE_FORCE_MAX_N = 4096
_CHUNK = 256


def _distances_to(coords: np.ndarray, point) -> np.ndarray:
    dx = coords[:, 0] - point[0]
    dy = coords[:, 1] - point[1]
    return np.sqrt(dx * dx + dy * dy)


class NeighborIndex:
    """K-nearest-neighbour lookup over a fixed set of planar points.

    ``query`` returns exactly ``k`` distinct rows sorted by distance and then
    by row index. Small point sets use an exact stable sort; larger ones use a
    k-d tree to collect candidates and resolve boundary ties exactly.
    """

    def __init__(self, coords, *, method: str = "auto"):
        c = np.array(coords, dtype=np.float64, copy=True)
        if c.ndim != 2 or c.shape[1] != 2:
            raise GeorfError(f"coords must be (n, 2), got {c.shape}")
        c.setflags(write=False)
        self.coords = c
        if method == "auto":
            method = "brute" if c.shape[0] <= _BRUTE_FORCE_MAX_N else "kdtree"
        if method not in ("brute", "kdtree"):
            raise GeorfError(f"unknown neighbour method {method!r}")
        self.method = method
        self._tree = cKDTree(c) if method == "kdtree" else None

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    def _check_k(self, k: int, exclude: bool):
        limit = self.n - (1 if exclude else 0)
        if not 1 <= k <= limit:
            raise KTooLarge(f"k={k} outside [1, {limit}] for {self.n} points")

    def query(self, point, k: int, exclude: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(indices, distances)`` of the ``k`` nearest points.

        ``exclude`` drops one row (usually the query point itself) before
        ranking.
        """
        self._check_k(k, exclude is not None)
        point = np.asarray(point, dtype=np.float64)
        if self.method == "brute":
            cand = np.arange(self.n)
        else:
            kq = min(self.n, k + (exclude is not None))
            d, _ = self._tree.query(point, kq)
            radius = float(np.max(np.atleast_1d(d)))
            cand = np.asarray(
                self._tree.query_ball_point(point, radius * (1 + 1e-9) + 1e-12), dtype=np.int64
            )
            cand.sort()
        if exclude is not None:
            cand = cand[cand != exclude]
        dist = _distances_to(self.coords[cand], point)
        order = np.argsort(dist, kind="stable")[:k]
        return cand[order], dist[order]

    def query_many(self, points, k: int, exclude_self: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised :meth:`query` for many points; returns ``(n_points, k)`` arrays.

        With ``exclude_self`` the points must be this index's own coordinates
        and row ``i`` excludes row ``i``.
        """
        points = np.asarray(points, dtype=np.float64)
        m = points.shape[0]
        if exclude_self and m != self.n:
            raise GeorfError("exclude_self needs one query point per indexed point")
        self._check_k(k, exclude_self)
        idx = np.empty((m, k), dtype=np.int64)
        dist = np.empty((m, k))
        if self.method == "kdtree":
            for i in range(m):
                idx[i], dist[i] = self.query(points[i], k, i if exclude_self else None)
            return idx, dist
        cx, cy = self.coords[:, 0], self.coords[:, 1]
        for a in range(0, m, _CHUNK):
            b = min(m, a + _CHUNK)
            dx = cx[None, :] - points[a:b, 0:1]
            dy = cy[None, :] - points[a:b, 1:2]
            d = np.sqrt(dx * dx + dy * dy)
            if exclude_self:
                d[np.arange(b - a), np.arange(a, b)] = np.inf
            order = np.argsort(d, axis=1, kind="stable")[:, :k]
            idx[a:b] = order
            dist[a:b] = np.take_along_axis(d, order, axis=1)
        return idx, dist


def knn_query(index: NeighborIndex, point, k: int, exclude: int | None = None) -> list[tuple[int, float]]:
    """The ``k`` nearest rows to ``point`` as ``(row, distance)`` pairs."""
    idx, dist = index.query(point, k, exclude)
    return [(int(i), float(d)) for i, d in zip(idx, dist)]


def bisquare_weights(distances, b: float) -> np.ndarray:
    """Bisquare kernel: ``(1 - (d/b)**2)**2`` inside the bandwidth, 0 outside."""
    if not b > 0:
        raise NonPositiveBandwidthDistance(f"kernel bandwidth distance must be positive, got {b}")
    d = np.asarray(distances, dtype=np.float64)
    if np.any(d < 0):
        raise GeorfError("distances must be nonnegative")
    u = d / b
    return np.where(d < b, (1.0 - u * u) ** 2, 0.0)


@dataclass(frozen=True)
class MoranResult:
    k: int
    I: float
    expected_I: float
    variance: float
    z_score: float
    p_value: float


@dataclass(frozen=True)
class IsaScanResult:
    results: tuple[MoranResult, ...]
    selected_lambda: int
    selected_alpha: float
    significance: float

    @property
    def selected(self) -> MoranResult:
        return next(r for r in self.results if r.k == self.selected_lambda)


def knn_neighbors(coords_or_index, k: int) -> np.ndarray:
    """``(n, k)`` array of each point's k nearest other points."""
    index = coords_or_index if isinstance(coords_or_index, NeighborIndex) else NeighborIndex(coords_or_index)
    idx, _ = index.query_many(index.coords, k, exclude_self=True)
    return idx


def morans_i(values, neighbors, weights=None, *, k: int | None = None) -> MoranResult:
    """Global Moran's I with a normal-approximation test under randomisation.

    Parameters
    ----------
    values : array of shape (n,)
    neighbors : int array of shape (n, k)
        Neighbour rows of each observation (self excluded).
    weights : array of shape (n, k), optional
        Spatial weights matching ``neighbors``; defaults to row-standardised
        binary weights ``1/k``.

    Returns
    -------
    MoranResult
        ``p_value`` is two-sided.
    """
    v = np.asarray(values, dtype=np.float64)
    nb = np.asarray(neighbors, dtype=np.int64)
    n = v.shape[0]
    if nb.ndim != 2 or nb.shape[0] != n:
        raise GeorfError(f"neighbors must be ({n}, k), got {nb.shape}")
    if n < 4:
        raise TooFewRows("Moran's I variance needs at least 4 observations")
    if np.ptp(v) == 0:
        raise ZeroVariance("values are constant")
    kk = nb.shape[1]
    w = np.full(nb.shape, 1.0 / kk) if weights is None else np.asarray(weights, dtype=np.float64)

    z = v - v.mean()
    m2 = float(z @ z)
    s0 = float(w.sum())
    cross = float(np.sum(z * np.sum(w * z[nb], axis=1)))
    I = n / s0 * cross / m2
    expected = -1.0 / (n - 1)

    rows = np.repeat(np.arange(n), kk)
    W = sparse.csr_matrix((w.ravel(), (rows, nb.ravel())), shape=(n, n))
    sym = W + W.T
    s1 = 0.5 * float(sym.multiply(sym).sum())
    s2 = float(np.sum((np.asarray(W.sum(axis=1)).ravel() + np.asarray(W.sum(axis=0)).ravel()) ** 2))
    b2 = n * float(np.sum(z**4)) / (m2 * m2)
    num = n * ((n * n - 3 * n + 3) * s1 - n * s2 + 3 * s0 * s0) - b2 * (
        (n * n - n) * s1 - 2 * n * s2 + 6 * s0 * s0
    )
    var = num / ((n - 1) * (n - 2) * (n - 3) * s0 * s0) - expected * expected
    if var > 0:
        zs = (I - expected) / math.sqrt(var)
        p = float(min(1.0, 2.0 * norm.sf(abs(zs))))
    else:
        zs, p = 0.0, 1.0
    return MoranResult(k=kk if k is None else k, I=I, expected_I=expected, variance=var, z_score=zs, p_value=p)


def default_isa_range(n: int) -> tuple[int, int]:
    """Neighbour counts from the 5% to the 95% quantile of the sample count."""
    k_min = max(2, math.ceil(0.05 * n))
    k_max = min(n - 1, math.floor(0.95 * n))
    return k_min, k_max


def alpha_from_moran(result: MoranResult, significance: float = 0.05) -> float:
    """Local weight from a Moran test: I when positive and significant, else 0."""
    if result.I > 0 and result.p_value < significance:
        return min(result.I, 1.0)
    return 0.0


def isa_scan(
    data: SpatialDataset,
    k_min: int | None = None,
    k_max: int | None = None,
    k_step: int = 1,
    significance: float = 0.05,
    index: NeighborIndex | None = None,
) -> IsaScanResult:
    """Incremental spatial autocorrelation of the target over neighbour counts.

    Moran's I is computed for every ``k`` in ``range(k_min, k_max + 1,
    k_step)``. The bandwidth is the ``k`` with the largest z-score (first one
    on ties); the local weight is that ``k``'s I when positive with
    ``p < significance``, otherwise 0.
    """
    n = data.n
    lo, hi = default_isa_range(n)
    k_min = lo if k_min is None else int(k_min)
    k_max = hi if k_max is None else int(k_max)
    if k_step < 1:
        raise GeorfError("k_step must be positive")
    if k_max > n - 1:
        raise KTooLarge(f"k_max={k_max} exceeds n-1={n - 1}")
    if k_min < 2:
        raise GeorfError(f"k_min must be at least 2, got {k_min}")
    ks = list(range(k_min, k_max + 1, k_step))
    if not ks:
        raise EmptyGrid(f"empty neighbour grid [{k_min}, {k_max}] step {k_step}")
    if np.ptp(data.target) == 0:
        raise ZeroVariance("target is constant")
    index = index or NeighborIndex(data.coords)
    nb = knn_neighbors(index, ks[-1])
    results = tuple(morans_i(data.target, nb[:, :k], k=k) for k in ks)
    zs = np.array([r.z_score if np.isfinite(r.z_score) else -np.inf for r in results])
    best = results[int(np.argmax(zs))]
    alpha = alpha_from_moran(best, significance)
    assert 0.0 <= alpha <= 1.0
    return IsaScanResult(results, best.k, alpha, significance)
