import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from georf.data import GrfConfig, SpatialDataset, resolve_mtry, validate_dataset
from georf.errors import EmptyData, GeorfError, MissingColumn, NonNumericCell


def rows(n=3):
    return [{"x": float(i), "y": float(2 * i), "a": i * 0.5, "b": str(i), "t": 1.0 + i} for i in range(n)]


def test_three_numeric_rows():
    d = validate_dataset(rows(), target="t", x="x", y="y")
    assert d.n == 3
    assert d.feature_names == ("a", "b")
    np.testing.assert_array_equal(d.features[:, 1], [0.0, 1.0, 2.0])
    np.testing.assert_array_equal(d.coords[:, 1], [0.0, 2.0, 4.0])
    assert d.row_ids == (0, 1, 2)
    assert d.warnings == ()


def test_na_target_names_row():
    r = rows()
    r[1]["t"] = "NA"
    with pytest.raises(NonNumericCell) as exc:
        validate_dataset(r, target="t", x="x", y="y")
    assert exc.value.row == 2
    assert exc.value.column == "t"
    assert "row 2" in str(exc.value)


@pytest.mark.parametrize("bad", ["inf", "nan", "", "1,5"])
def test_non_finite_or_garbage_rejected(bad):
    r = rows()
    r[0]["a"] = bad
    with pytest.raises(NonNumericCell):
        validate_dataset(r, target="t", x="x", y="y")


def test_duplicate_coords_accepted_with_warning():
    r = rows(4)
    r[0]["x"], r[0]["y"] = 1.0, 2.0
    r[3]["x"], r[3]["y"] = 1.0, 2.0
    d = validate_dataset(r, target="t", x="x", y="y")
    assert d.n == 4
    assert len(d.warnings) == 1
    assert "0" in d.warnings[0] and "3" in d.warnings[0]
    assert "(1.0, 2.0)" in d.warnings[0]


def test_missing_column():
    with pytest.raises(MissingColumn) as exc:
        validate_dataset(rows(), target="income", x="x", y="y")
    assert exc.value.column == "income"


def test_too_few_rows():
    with pytest.raises(EmptyData):
        validate_dataset(rows(1), target="t", x="x", y="y")


def test_explicit_feature_order_and_ids():
    r = rows()
    for i, row in enumerate(r):
        row["id"] = f"m{i}"
    d = validate_dataset(r, target="t", x="x", y="y", features=["b", "a"], id_column="id")
    assert d.feature_names == ("b", "a")
    assert d.row_ids == ("m0", "m1", "m2")


def test_arrays_are_read_only():
    d = validate_dataset(rows(), target="t", x="x", y="y")
    with pytest.raises(ValueError):
        d.features[0, 0] = 9.0


def test_dataset_invariants_enforced():
    X = np.zeros((3, 1))
    with pytest.raises(GeorfError):
        SpatialDataset(X, np.zeros(2), np.zeros((3, 2)), ("a",))
    with pytest.raises(GeorfError):
        SpatialDataset(X, np.zeros(3), np.zeros((3, 2)), ("a", "b"))
    with pytest.raises(GeorfError):
        SpatialDataset(np.zeros((3, 2)), np.zeros(3), np.zeros((3, 2)), ("a", "a"))
    with pytest.raises(GeorfError):
        SpatialDataset(X, np.array([0.0, np.nan, 1.0]), np.zeros((3, 2)), ("a",))


def test_subset_and_with_target():
    d = validate_dataset(rows(4), target="t", x="x", y="y")
    s = d.subset([3, 1])
    assert s.row_ids == (3, 1)
    np.testing.assert_array_equal(s.target, [4.0, 2.0])
    w = d.with_target([0, 0, 0, 1])
    np.testing.assert_array_equal(w.target, [0, 0, 0, 1])
    np.testing.assert_array_equal(w.features, d.features)


@pytest.mark.parametrize(
    "setting,s,expected",
    [("S", 7, 7), ("S/3", 7, 3), ("S/3", 2, 1), ("S/3", 9, 3), ("sqrt", 7, 3), ("sqrt", 16, 4), ("sqrt", 2, 1), (2, 5, 2), ("4", 5, 4)],
)
def test_resolve_mtry(setting, s, expected):
    assert resolve_mtry(setting, s) == expected


@pytest.mark.parametrize("setting", [0, 6, "half", -1])
def test_resolve_mtry_rejects(setting):
    with pytest.raises(GeorfError):
        resolve_mtry(setting, 5)


def test_config_validation_and_roundtrip():
    with pytest.raises(GeorfError):
        GrfConfig(local_weight_alpha=1.5)
    with pytest.raises(GeorfError):
        GrfConfig(ntree=0)
    c = GrfConfig(ntree=7, mtry="sqrt", bandwidth_lambda=12, enable_i3=True)
    assert GrfConfig.from_dict(c.to_dict()) == c
    assert c.replace(ntree=9).ntree == 9


cells = st.one_of(
    st.floats(allow_nan=False, allow_infinity=False, width=64),
    st.integers(-1000, 1000),
)


@given(st.lists(st.tuples(cells, cells, cells, cells), min_size=2, max_size=15))
def test_validate_idempotent_and_invariants(table):
    raw = [{"x": a, "y": b, "f": c, "t": d} for a, b, c, d in table]
    d = validate_dataset(raw, target="t", x="x", y="y")
    assert d.features.shape == (len(table), 1)
    assert d.target.shape == (len(table),)
    assert d.coords.shape == (len(table), 2)
    assert np.all(np.isfinite(d.features)) and np.all(np.isfinite(d.coords))
    assert len(set(d.feature_names)) == len(d.feature_names)
    again = validate_dataset(d)
    assert again == d
    assert again.warnings == d.warnings
