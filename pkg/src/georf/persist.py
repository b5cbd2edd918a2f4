"""Model files.

A model file is a zip archive holding ``meta.json`` and one ``.npy`` member
per array. Member timestamps are fixed, so saving the same model twice gives
identical bytes. Nothing is pickled.
"""

from __future__ import annotations

import io
import json
import zipfile

import numpy as np

from . import __version__
from .data import GrfConfig
from .errors import GeorfError
from .forest import RandomForest
from .grf import TrainedGrf
from .spatial import IsaScanResult, MoranResult

FORMAT_NAME = "georf-model"
FORMAT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)
_FOREST_KEYS = ("feature", "threshold", "left", "right", "value")


def _write_member(zf: zipfile.ZipFile, name: str, payload: bytes):
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, payload)


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def _isa_to_dict(isa: IsaScanResult | None):
    if isa is None:
        return None
    return {
        "selected_lambda": isa.selected_lambda,
        "selected_alpha": isa.selected_alpha,
        "significance": isa.significance,
        "results": [r.__dict__ for r in isa.results],
    }


def _isa_from_dict(d):
    if d is None:
        return None
    return IsaScanResult(
        tuple(MoranResult(**r) for r in d["results"]),
        d["selected_lambda"],
        d["selected_alpha"],
        d["significance"],
    )


def save_model(model: TrainedGrf, path, extra_metadata: dict | None = None) -> None:
    """Write ``model`` to ``path``. ``extra_metadata`` lands in ``meta.json``."""
    model._check()
    locals_ = model.local_forests
    node_counts = np.array([f.feature.shape[0] for f in locals_], dtype=np.int64)
    arrays = {f"global_{k}": v for k, v in model.global_forest.to_arrays().items()}
    for key in _FOREST_KEYS:
        arrays[f"local_{key}"] = np.concatenate([getattr(f, key) for f in locals_])
    arrays["local_node_counts"] = node_counts
    arrays["local_tree_offsets"] = np.concatenate([f.tree_offsets for f in locals_])
    arrays["local_tree_importance"] = np.concatenate([f.tree_importance for f in locals_])
    arrays["local_ntree"] = np.array([f.ntree for f in locals_], dtype=np.int64)
    arrays["anchor_coords"] = model.anchor_coords
    arrays["sample_sizes"] = model.sample_sizes
    arrays["expanded"] = model.expanded

    meta = {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "library_version": __version__,
        "config": model.config.to_dict(),
        "mtry": model.mtry,
        "feature_names": list(model.feature_names),
        "anchor_ids": [str(a) if not isinstance(a, int) else a for a in model.anchor_ids],
        "seeds": {
            "base_seed": model.config.base_seed,
            "global_forest": model.config.base_seed,
            "local_forest": "derive_seed(base_seed, 'local', anchor_index)",
        },
        "training_stats": {"expanded_count": model.training_stats["expanded_count"]},
        "isa": _isa_to_dict(model.isa),
        "arrays": sorted(arrays),
        "metadata": {**model.metadata, **(extra_metadata or {})},
    }
    with zipfile.ZipFile(path, "w") as zf:
        _write_member(zf, "meta.json", json.dumps(meta, indent=2, sort_keys=True).encode("utf-8"))
        for name in sorted(arrays):
            _write_member(zf, f"{name}.npy", _npy_bytes(arrays[name]))


def read_metadata(path) -> dict:
    with zipfile.ZipFile(path) as zf:
        return json.loads(zf.read("meta.json"))


def load_model(path) -> TrainedGrf:
    try:
        zf = zipfile.ZipFile(path)
    except zipfile.BadZipFile:
        raise GeorfError(f"{path}: not a georf model file") from None
    with zf:
        meta = json.loads(zf.read("meta.json"))
        if meta.get("format") != FORMAT_NAME:
            raise GeorfError(f"{path}: not a georf model file")
        if meta.get("format_version") != FORMAT_VERSION:
            raise GeorfError(f"{path}: unsupported model format version {meta.get('format_version')}")
        arrays = {
            name: np.load(io.BytesIO(zf.read(f"{name}.npy")), allow_pickle=False)
            for name in meta["arrays"]
        }

    mtry = meta["mtry"]
    glob = RandomForest(
        *(arrays[f"global_{k}"] for k in _FOREST_KEYS),
        arrays["global_tree_offsets"],
        arrays["global_tree_importance"],
        mtry=mtry,
    )
    forests = []
    node_pos = tree_pos = off_pos = 0
    for count, ntree in zip(arrays["local_node_counts"], arrays["local_ntree"]):
        nodes = [arrays[f"local_{k}"][node_pos:node_pos + count].copy() for k in _FOREST_KEYS]
        offsets = arrays["local_tree_offsets"][off_pos:off_pos + ntree + 1].copy()
        imp = arrays["local_tree_importance"][tree_pos:tree_pos + ntree].copy()
        forests.append(RandomForest(*nodes, offsets, imp, mtry=mtry))
        node_pos += count
        tree_pos += ntree
        off_pos += ntree + 1

    return TrainedGrf(
        config=GrfConfig.from_dict(meta["config"]),
        feature_names=tuple(meta["feature_names"]),
        global_forest=glob,
        local_forests=forests,
        anchor_coords=arrays["anchor_coords"],
        anchor_ids=tuple(meta["anchor_ids"]),
        sample_sizes=arrays["sample_sizes"],
        expanded=arrays["expanded"],
        isa=_isa_from_dict(meta["isa"]),
        metadata=meta.get("metadata", {}),
    )
