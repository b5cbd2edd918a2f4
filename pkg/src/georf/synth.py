"""Synthetic point datasets used by the tests, the acceptance suite and ``georf synth``."""

from __future__ import annotations

import math

import numpy as np

from .data import SpatialDataset


def _names(k: int) -> tuple[str, ...]:
    return tuple(f"x{i + 1}" for i in range(k))


def make_clustered(
    n_clusters: int = 6,
    cluster_size: int = 11,
    seed: int = 0,
    *,
    spacing: float = 100.0,
    spread: float = 1.0,
    noise: float = 0.05,
    n_features: int = 3,
) -> SpatialDataset:
    """Tight, well separated clusters whose target levels alternate high/low.

    Every point's ``cluster_size - 1`` nearest neighbours are its own cluster
    mates, so Moran's z-score climbs with ``k`` up to ``cluster_size - 1`` and
    collapses once neighbours from other clusters are included.
    """
    rng = np.random.default_rng(seed)
    cols = math.ceil(math.sqrt(n_clusters))
    centres = np.array([((c % cols) * spacing, (c // cols) * spacing) for c in range(n_clusters)])
    c = np.arange(n_clusters)
    levels = np.where((c % cols + c // cols) % 2 == 0, 1.0, -1.0)
    coords = np.repeat(centres, cluster_size, axis=0) + rng.uniform(-spread, spread, (n_clusters * cluster_size, 2))
    level = np.repeat(levels, cluster_size)
    target = level + noise * rng.standard_normal(level.shape[0])
    X = rng.uniform(0, 1, (level.shape[0], n_features))
    X[:, 0] = target + 0.1 * rng.standard_normal(level.shape[0])
    return SpatialDataset(X, target, coords, _names(n_features))


def make_quadrants(
    n: int = 200,
    seed: int = 0,
    *,
    extent: float = 100.0,
    noise: float = 1.0,
) -> SpatialDataset:
    """Regionally varying coefficients: each quadrant has its own slopes.

    ``y = b1[q] * x1 + b2[q] * x2 + 0.5 * x3 + noise``, with features drawn
    uniformly from ``[0, 10]``. A forest that sees only the features cannot
    tell the quadrants apart.
    """
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0, extent, (n, 2))
    X = rng.uniform(0, 10, (n, 3))
    q = (coords[:, 0] >= extent / 2).astype(int) + 2 * (coords[:, 1] >= extent / 2).astype(int)
    b1 = np.array([1.0, 3.0, 5.0, 7.0])[q]
    b2 = np.array([4.0, -1.0, 2.0, 0.0])[q]
    y = b1 * X[:, 0] + b2 * X[:, 1] + 0.5 * X[:, 2] + noise * rng.standard_normal(n)
    return SpatialDataset(X, y, coords, _names(3))


def make_spatial_field(
    n: int = 300,
    seed: int = 0,
    *,
    extent: float = 100.0,
    noise: float = 1.0,
) -> SpatialDataset:
    """Smooth spatial trend plus feature effects."""
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0, extent, (n, 2))
    X = rng.uniform(0, 10, (n, 3))
    u, v = coords[:, 0] / extent, coords[:, 1] / extent
    trend = 10 * np.sin(2 * np.pi * u) + 10 * np.cos(2 * np.pi * v)
    y = trend + (1.0 + 2.0 * u) * X[:, 0] + X[:, 1] + noise * rng.standard_normal(n)
    return SpatialDataset(X, y, coords, _names(3))


def inject_outliers(
    data: SpatialDataset,
    fraction: float = 0.01,
    seed: int = 0,
    *,
    magnitude: float = 20.0,
) -> tuple[SpatialDataset, np.ndarray]:
    """Replace the target of ``ceil(fraction * n)`` random rows with extreme values.

    Outliers are set to ``mean + magnitude * std`` of the clean target.
    Returns the corrupted dataset and the affected row indices.
    """
    rng = np.random.default_rng(seed)
    k = max(1, math.ceil(fraction * data.n))
    rows = np.sort(rng.choice(data.n, size=k, replace=False))
    y = np.array(data.target)
    y[rows] = y.mean() + magnitude * y.std()
    return data.with_target(y), rows


def make_checkerboard(side: int = 12, seed: int = 0, *, noise: float = 0.05) -> SpatialDataset:
    """Unit lattice whose target alternates sign between rook neighbours."""
    rng = np.random.default_rng(seed)
    ii, jj = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    coords = np.column_stack([ii.ravel(), jj.ravel()]).astype(float)
    y = np.where((ii + jj).ravel() % 2 == 0, 1.0, -1.0) + noise * rng.standard_normal(side * side)
    X = rng.uniform(0, 1, (side * side, 2))
    return SpatialDataset(X, y, coords, _names(2))


GENERATORS = {
    "clustered": make_clustered,
    "quadrants": make_quadrants,
    "field": make_spatial_field,
    "checkerboard": make_checkerboard,
}
