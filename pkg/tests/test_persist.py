import numpy as np
import pytest

from georf import __version__
from georf.data import GrfConfig
from georf.errors import GeorfError
from georf.grf import fit_grf, predict_grf
from georf.persist import load_model, read_metadata, save_model
from georf.synth import make_clustered


@pytest.fixture(scope="module")
def model():
    data = make_clustered(n_clusters=2, cluster_size=11, seed=0)
    return data, fit_grf(data, GrfConfig(ntree=4, enable_i1=True, enable_i2=True, enable_i3=True, base_seed=5), workers=1)


def test_roundtrip_predictions_bit_exact(model, tmp_path):
    data, m = model
    save_model(m, tmp_path / "m.grf")
    loaded = load_model(tmp_path / "m.grf")
    rng = np.random.default_rng(0)
    pts = rng.uniform(-10, 110, (40, 2))
    X = rng.uniform(-1, 2, (40, data.n_features))
    a = predict_grf(m, pts, X)
    b = predict_grf(loaded, pts, X)
    for key in a:
        np.testing.assert_array_equal(a[key], b[key])
    assert loaded.config == m.config
    assert loaded.feature_names == m.feature_names
    assert loaded.training_stats == m.training_stats
    assert loaded.isa.selected_lambda == m.isa.selected_lambda


def test_saving_is_byte_deterministic(model, tmp_path):
    _, m = model
    save_model(m, tmp_path / "a.grf")
    save_model(m, tmp_path / "b.grf")
    assert (tmp_path / "a.grf").read_bytes() == (tmp_path / "b.grf").read_bytes()


def test_metadata_records_config_seeds_version(model, tmp_path):
    _, m = model
    save_model(m, tmp_path / "m.grf", extra_metadata={"note": "x"})
    meta = read_metadata(tmp_path / "m.grf")
    assert meta["library_version"] == __version__
    assert meta["config"]["base_seed"] == 5
    assert meta["seeds"]["base_seed"] == 5
    assert meta["config"]["bandwidth_lambda"] == 10
    assert meta["metadata"]["note"] == "x"


def test_rejects_foreign_files(tmp_path):
    bad = tmp_path / "bad.grf"
    bad.write_text("not a model")
    with pytest.raises(GeorfError):
        load_model(bad)
