"""Geographical random forest regression with autocorrelation-driven tuning."""

__version__ = "0.1.0"

from .data import GrfConfig, SpatialDataset, resolve_mtry, validate_dataset
from .errors import GeorfError
from .forest import RandomForest, bootstrap_sample, fit_forest, predict_forest
from .grf import (
    ImportanceTable,
    TrainedGrf,
    expand_local_samples,
    fit_grf,
    importance_table,
    local_prediction,
    predict_grf,
)
from .spatial import (
    IsaScanResult,
    MoranResult,
    NeighborIndex,
    bisquare_weights,
    isa_scan,
    knn_query,
    morans_i,
)
from .tree import RegressionTree, fit_tree, predict_tree

__all__ = [
    "GeorfError",
    "GrfConfig",
    "ImportanceTable",
    "IsaScanResult",
    "MoranResult",
    "NeighborIndex",
    "RandomForest",
    "RegressionTree",
    "SpatialDataset",
    "TrainedGrf",
    "bisquare_weights",
    "bootstrap_sample",
    "expand_local_samples",
    "fit_forest",
    "fit_grf",
    "fit_tree",
    "importance_table",
    "isa_scan",
    "knn_query",
    "local_prediction",
    "morans_i",
    "predict_forest",
    "predict_grf",
    "predict_tree",
    "resolve_mtry",
    "validate_dataset",
]
