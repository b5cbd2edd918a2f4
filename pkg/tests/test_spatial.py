import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from georf.data import SpatialDataset
from georf.errors import GeorfError, KTooLarge, NonPositiveBandwidthDistance, ZeroVariance
from georf.spatial import (
    NeighborIndex,
    alpha_from_moran,
    bisquare_weights,
    default_isa_range,
    isa_scan,
    knn_neighbors,
    knn_query,
    morans_i,
)
from georf.synth import make_checkerboard, make_clustered
from oracles import dense_knn_weights, knn_bruteforce, knn_matrix, moran_loop, moran_variance_dense


def line(n):
    return np.column_stack([np.arange(n, dtype=float), np.zeros(n)])


def test_knn_on_a_line():
    idx = NeighborIndex(line(4))
    assert [i for i, _ in knn_query(idx, (0.0, 0.0), 3, exclude=0)] == [1, 2, 3]
    assert [d for _, d in knn_query(idx, (0.0, 0.0), 3, exclude=0)] == [1.0, 2.0, 3.0]


def test_knn_all_others():
    idx = NeighborIndex(line(6))
    assert sorted(i for i, _ in knn_query(idx, (2.0, 0.0), 5, exclude=2)) == [0, 1, 3, 4, 5]


def test_knn_ties_break_by_index():
    coords = np.array([[1.0, 0], [-1.0, 0], [0, 1.0], [0, -1.0], [0, 0], [0, 0]])
    idx = NeighborIndex(coords)
    assert [i for i, _ in knn_query(idx, (0.0, 0.0), 6)] == [4, 5, 0, 1, 2, 3]
    assert [i for i, _ in knn_query(idx, (0.0, 0.0), 3, exclude=4)] == [5, 0, 1]


def test_knn_k_too_large():
    idx = NeighborIndex(line(4))
    with pytest.raises(KTooLarge):
        knn_query(idx, (0.0, 0.0), 4, exclude=0)
    with pytest.raises(KTooLarge):
        knn_query(idx, (0.0, 0.0), 5)


def test_knn_fifty_random_points():
    rng = np.random.default_rng(0)
    coords = rng.uniform(size=(50, 2))
    idx = NeighborIndex(coords)
    for i in range(50):
        got = knn_query(idx, coords[i], 7, exclude=i)
        want_i, want_d = knn_bruteforce(coords, coords[i], 7, exclude=i)
        assert [g for g, _ in got] == want_i
        np.testing.assert_allclose([d for _, d in got], want_d, rtol=0, atol=1e-12)


@given(
    n=st.integers(2, 120),
    k=st.integers(1, 20),
    seed=st.integers(0, 2**31),
    grid=st.booleans(),
    method=st.sampled_from(["brute", "kdtree"]),
)
def test_knn_matches_oracle(n, k, seed, grid, method):
    rng = np.random.default_rng(seed)
    # integer grids produce many exact distance ties and duplicate points
    coords = rng.integers(0, 5, (n, 2)).astype(float) if grid else rng.uniform(-10, 10, (n, 2))
    k = min(k, n - 1)
    index = NeighborIndex(coords, method=method)
    point = coords[0]
    got = [i for i, _ in knn_query(index, point, k, exclude=0)]
    assert got == knn_bruteforce(coords, point, k, exclude=0)[0]
    assert len(set(got)) == k and 0 not in got
    q = rng.uniform(-1, 6, 2)
    assert [i for i, _ in knn_query(index, q, k)] == knn_bruteforce(coords, q, k)[0]


def test_query_many_matches_single_queries():
    rng = np.random.default_rng(1)
    coords = rng.integers(0, 6, (80, 2)).astype(float)
    for method in ("brute", "kdtree"):
        index = NeighborIndex(coords, method=method)
        many, dist = index.query_many(coords, 5, exclude_self=True)
        np.testing.assert_array_equal(many, knn_matrix(coords, 5))
        assert np.all(np.diff(dist, axis=1) >= 0)


def test_bisquare_identities():
    assert bisquare_weights([0.0], 2.0)[0] == 1.0
    assert bisquare_weights([2.0], 2.0)[0] == 0.0
    assert bisquare_weights([1.0], 2.0)[0] == 0.5625
    assert bisquare_weights([5.0], 2.0)[0] == 0.0
    with pytest.raises(NonPositiveBandwidthDistance):
        bisquare_weights([0.0], 0.0)


def test_bisquare_monotone_on_grid():
    d = np.linspace(0, 3.0, 1000)
    w = bisquare_weights(d, 3.0)
    assert np.all(np.diff(w) <= 0)
    assert np.all((w >= 0) & (w <= 1))


def test_moran_matches_double_loop():
    rng = np.random.default_rng(2)
    coords = rng.uniform(size=(20, 2))
    v = rng.normal(size=20)
    res = morans_i(v, knn_neighbors(coords, 4))
    W = dense_knn_weights(coords, 4)
    assert abs(res.I - moran_loop(v.tolist(), W.tolist())) <= 1e-10
    assert abs(res.variance - moran_variance_dense(v, W)) <= 1e-10
    assert res.expected_I == -1 / 19


@given(n=st.integers(4, 30), k=st.integers(1, 8), seed=st.integers(0, 2**31))
def test_moran_properties(n, k, seed):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(size=(n, 2))
    v = rng.normal(size=n)
    k = min(k, n - 1)
    res = morans_i(v, knn_neighbors(coords, k))
    W = dense_knn_weights(coords, k)
    assert abs(res.I - moran_loop(v.tolist(), W.tolist())) <= 1e-10
    # I is a Rayleigh quotient of the symmetrised weights; with asymmetric
    # KNN weights its extreme eigenvalues can leave [-1, 1]
    eig = np.linalg.eigvalsh((W + W.T) / 2)
    assert eig[0] - 1e-9 <= res.I <= eig[-1] + 1e-9
    assert 0.0 <= res.p_value <= 1.0


def test_moran_within_unit_interval_when_weights_symmetric():
    # on a ring every point's two nearest neighbours are mutual, so W is symmetric
    t = np.linspace(0, 2 * np.pi, 30, endpoint=False)
    coords = np.column_stack([np.cos(t), np.sin(t)])
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert abs(morans_i(rng.normal(size=30), knn_neighbors(coords, 2)).I) <= 1 + 1e-9


def test_moran_constant_values():
    with pytest.raises(ZeroVariance):
        morans_i(np.ones(10), knn_neighbors(line(10), 2))


def test_moran_permutation_mean():
    rng = np.random.default_rng(3)
    coords = rng.uniform(size=(40, 2))
    nb = knn_neighbors(coords, 5)
    v = rng.normal(size=40)
    Is = [morans_i(rng.permutation(v), nb).I for _ in range(2000)]
    assert abs(np.mean(Is) - (-1 / 39)) <= 0.01


def test_alpha_rule():
    from georf.spatial import MoranResult

    pos = MoranResult(5, 0.4, -0.01, 0.01, 4.1, 0.001)
    assert alpha_from_moran(pos) == 0.4
    assert alpha_from_moran(MoranResult(5, 0.4, -0.01, 0.01, 1.0, 0.2)) == 0.0
    assert alpha_from_moran(MoranResult(5, -0.4, -0.01, 0.01, -4.0, 0.001)) == 0.0
    assert alpha_from_moran(pos, significance=0.0005) == 0.0


def test_default_isa_range():
    assert default_isa_range(100) == (5, 95)
    assert default_isa_range(20) == (2, 19)
    assert default_isa_range(325) == (17, 308)


def test_isa_selects_cluster_peak():
    data = make_clustered(n_clusters=2, cluster_size=11, seed=0)
    scan = isa_scan(data)
    assert scan.selected_lambda == 10
    zs = [r.z_score for r in scan.results]
    assert scan.results[int(np.argmax(zs))].k == 10
    W = dense_knn_weights(data.coords, 10)
    assert abs(scan.selected_alpha - moran_loop(data.target.tolist(), W.tolist())) <= 1e-10


def test_isa_checkerboard_gives_zero_alpha():
    scan = isa_scan(make_checkerboard(12, seed=0), k_min=2, k_max=4)
    assert all(r.I < 0 for r in scan.results)
    assert scan.selected_alpha == 0.0


def test_isa_errors():
    data = make_clustered(n_clusters=2, cluster_size=5, seed=0)
    with pytest.raises(KTooLarge):
        isa_scan(data, k_min=2, k_max=10)
    with pytest.raises(GeorfError):
        isa_scan(data, k_min=5, k_max=3)
    const = data.with_target(np.ones(data.n))
    with pytest.raises(ZeroVariance):
        isa_scan(const, k_min=2, k_max=4)


@given(seed=st.integers(0, 2**31), n=st.integers(6, 40))
def test_isa_invariants(seed, n):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(size=(n, 2))
    y = rng.normal(size=n) + coords[:, 0] * rng.uniform(0, 5)
    data = SpatialDataset(np.zeros((n, 1)), y, coords, ("a",))
    scan = isa_scan(data)
    assert 0.0 <= scan.selected_alpha <= 1.0
    zs = [r.z_score for r in scan.results]
    assert scan.selected_lambda == scan.results[int(np.argmax(zs))].k
    sel = scan.selected
    expected = sel.I if (sel.I > 0 and sel.p_value < 0.05) else 0.0
    assert scan.selected_alpha == min(expected, 1.0)
