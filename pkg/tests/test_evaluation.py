import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from georf.data import GrfConfig, SpatialDataset
from georf.errors import EmptyGrid, LengthMismatch, TooFewRows, ZeroVariance
from georf.evaluation import (
    EXPERIMENT_VARIANTS,
    default_grids,
    fold_assignment,
    grid_search,
    isa_tune,
    kfold_cv,
    r_squared,
    rmse,
    run_experiments,
)
from georf.synth import make_checkerboard, make_clustered, make_spatial_field

SMALL = GrfConfig(ntree=3, mtry=1, parallelism=1)


def test_r_squared_examples():
    y = np.array([1.0, 2.0, 3.0])
    assert r_squared(y, y) == 1.0
    assert r_squared(y, np.full(3, y.mean())) == 0.0
    assert r_squared(y, [2.0, 2.0, 2.0]) == 0.0


def test_rmse_examples():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(math.sqrt(12.5), abs=1e-15)
    assert rmse([1.0, 2.0, 3.0], [2.0, 2.0, 2.0]) == pytest.approx(math.sqrt(2 / 3), abs=1e-15)


def test_metric_errors():
    with pytest.raises(LengthMismatch):
        rmse([1.0], [1.0, 2.0])
    with pytest.raises(ZeroVariance):
        r_squared([1.0, 1.0], [1.0, 2.0])


@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=2, max_size=50))
def test_metrics_match_two_pass(pairs):
    y = [a for a, _ in pairs]
    yhat = [b for _, b in pairs]
    n = len(y)
    mean = sum(y) / n
    ss_tot = sum((v - mean) ** 2 for v in y)
    ss_res = sum((a - b) ** 2 for a, b in zip(y, yhat))
    assert abs(rmse(y, yhat) - math.sqrt(ss_res / n)) <= 1e-10 * (1 + math.sqrt(ss_res / n))
    if ss_tot > 1e-6:
        expected = 1 - ss_res / ss_tot
        assert abs(r_squared(y, yhat) - expected) <= 1e-10 * (1 + abs(expected))


def test_fold_sizes_pigeonhole():
    labels = fold_assignment(103, 10, seed=0)
    sizes = sorted(np.bincount(labels).tolist())
    assert sizes == [10] * 7 + [11] * 3


@given(n=st.integers(2, 200), folds=st.integers(2, 20), seed=st.integers(0, 2**32))
def test_folds_partition(n, folds, seed):
    folds = min(folds, n)
    labels = fold_assignment(n, folds, seed)
    assert labels.shape == (n,)
    assert set(labels.tolist()) == set(range(folds))
    sizes = np.bincount(labels)
    assert sizes.max() - sizes.min() <= 1
    assert np.array_equal(labels, fold_assignment(n, folds, seed))


def test_fold_errors():
    with pytest.raises(TooFewRows):
        fold_assignment(5, 6, 0)
    with pytest.raises(TooFewRows):
        fold_assignment(5, 1, 0)


def test_leave_one_out():
    data = make_spatial_field(12, seed=0)
    report = kfold_cv(data, SMALL.replace(bandwidth_lambda=4), folds=12, seed=0)
    assert [f["n_test"] for f in report.per_fold] == [1] * 12
    assert report.models_fitted == 12
    assert sorted(report.fold_assignment.tolist()) == list(range(12))


def test_memorisation_gives_near_perfect_r2():
    rng = np.random.default_rng(0)
    base_X = rng.uniform(size=(15, 2))
    base_y = rng.normal(size=15) * 10
    base_c = rng.uniform(0, 100, (15, 2))
    reps = 10
    data = SpatialDataset(np.repeat(base_X, reps, 0), np.repeat(base_y, reps), np.repeat(base_c, reps, 0), ("a", "b"))
    cfg = GrfConfig(ntree=20, mtry="S", bandwidth_lambda=5, parallelism=1)
    # ten copies over five folds leave at least six twins of every test row in training
    rf = kfold_cv(data, cfg, folds=5, seed=1, model="rf")
    grf = kfold_cv(data, cfg, folds=5, seed=1)
    assert rf.pooled_r2 > 0.99
    assert grf.pooled_r2 > 0.99


def test_pooled_metrics_use_out_of_fold_predictions():
    data = make_spatial_field(40, seed=1)
    report = kfold_cv(data, SMALL.replace(bandwidth_lambda=6), folds=4, seed=3)
    assert report.pooled_rmse == rmse(data.target, report.predictions)
    assert report.pooled_r2 == r_squared(data.target, report.predictions)
    alpha = SMALL.local_weight_alpha
    np.testing.assert_allclose(
        report.predictions, alpha * report.local_predictions + (1 - alpha) * report.global_predictions, rtol=0, atol=1e-12
    )


def test_cv_independent_of_workers():
    data = make_spatial_field(40, seed=2)
    cfg = SMALL.replace(bandwidth_lambda=6, enable_i3=True, enable_i2=True)
    a = kfold_cv(data, cfg, folds=4, seed=3, workers=1)
    b = kfold_cv(data, cfg, folds=4, seed=3, workers=4)
    np.testing.assert_array_equal(a.predictions, b.predictions)


def test_grid_search_counts_and_single_candidate():
    data = make_spatial_field(30, seed=0)
    grids = {"ntree": [2, 3], "mtry": [1], "lambda": [4, 6], "alpha": [0.25, 0.75]}
    report = grid_search(data, grids, folds=3, seed=0, base_config=SMALL)
    assert report.candidates_evaluated == 8
    assert report.grf_fits_performed == 24
    assert len(report.leaderboard) == 8
    best = min(report.leaderboard, key=lambda r: r["pooled_rmse"])
    assert report.chosen.bandwidth_lambda == best["bandwidth_lambda"]

    one = grid_search(data, {"ntree": [3], "mtry": [1], "lambda": [5], "alpha": [0.4]}, folds=3, seed=0, base_config=SMALL)
    c = one.chosen
    assert (c.ntree, c.mtry, c.bandwidth_lambda, c.local_weight_alpha) == (3, 1, 5, 0.4)

    with pytest.raises(EmptyGrid):
        grid_search(data, {"ntree": [], "mtry": [1], "lambda": [5], "alpha": [0.4]}, folds=3)


def test_isa_tune_fewer_fits_than_grid():
    data = make_spatial_field(30, seed=0)
    forest = {"ntree": [2, 3], "mtry": [1]}
    isa = isa_tune(data, forest, folds=3, seed=0, base_config=SMALL)
    grid = grid_search(data, {**forest, "lambda": [4, 6], "alpha": [0.5]}, folds=3, seed=0, base_config=SMALL)
    assert isa.grf_fits_performed == 6
    assert isa.grf_fits_performed < grid.grf_fits_performed
    assert isa.isa is not None
    assert isa.chosen.bandwidth_lambda == isa.isa.selected_lambda


def test_isa_tune_recovers_cluster_peak():
    data = make_clustered(n_clusters=2, cluster_size=11, seed=0)
    report = isa_tune(data, {"ntree": [3], "mtry": [1]}, folds=10, seed=0, base_config=SMALL)
    assert report.chosen.bandwidth_lambda == 10


def test_isa_tune_zero_alpha_collapses_to_forest():
    data = make_checkerboard(8, seed=0)
    report = isa_tune(data, {"ntree": [3], "mtry": [1]}, folds=4, seed=0, base_config=SMALL, k_min=2, k_max=4)
    assert report.chosen.local_weight_alpha == 0.0
    grf = kfold_cv(data, report.chosen, folds=4, seed=0)
    rf = kfold_cv(data, report.chosen, folds=4, seed=0, model="rf")
    np.testing.assert_array_equal(grf.predictions, rf.predictions)


def test_default_grids_are_valid_in_every_fold():
    g = default_grids(100, 10, folds=10)
    assert g["mtry"] == ["S", "S/3", "sqrt"]
    assert default_grids(100, 6)["mtry"] == ["S", "S/3"]
    assert g["alpha"] == [0.25, 0.5, 0.75]
    assert max(g["lambda"]) <= 89
    assert min(g["lambda"]) >= 2
    assert g["ntree"] == [20, 40]


def test_experiment_rows_schema():
    data = make_spatial_field(30, seed=0)
    grids = {"ntree": [2], "mtry": [1], "lambda": [5], "alpha": [0.5]}
    out = run_experiments(data, grids, folds=3, seed=0, base_config=SMALL)
    rows = out["rows"]
    assert [(r["experiment"], r["model"]) for r in rows] == list(EXPERIMENT_VARIANTS)
    for r in rows:
        assert {"ntree", "mtry", "bandwidth_lambda", "local_weight_alpha", "enable_i2", "enable_i3", "r2", "rmse"} <= set(r)
    byname = {r["model"]: r for r in rows}
    assert byname["RF"]["bandwidth_lambda"] is None
    assert byname["GRF"]["bandwidth_lambda"] == 5
    assert byname["GRF+I1"]["bandwidth_lambda"] == out["isa_report"].isa.selected_lambda
    assert byname["GRF+I1+I2+I3"]["enable_i3"] and byname["GRF+I1+I2+I3"]["enable_i2"]
