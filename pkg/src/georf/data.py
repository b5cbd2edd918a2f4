"""Dataset and configuration types shared across georf."""

from __future__ import annotations

import math
from collections import defaultdict
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, fields, replace
from typing import Union

import numpy as np

from .errors import EmptyData, GeorfError, MissingColumn, NonNumericCell

MtrySpec = Union[int, str]
MTRY_SYMBOLS = ("S", "S/3", "sqrt")
KERNELS = ("bisquare",)


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SpatialDataset:
    """Point dataset: features, target and planar coordinates per row.

    Arrays are copied and made read-only on construction, so a dataset can be
    shared between worker threads without defensive copies.
    """

    features: np.ndarray
    target: np.ndarray
    coords: np.ndarray
    feature_names: tuple[str, ...]
    row_ids: tuple = None
    warnings: tuple[str, ...] = field(default=(), init=False)

    def __post_init__(self):
        X = _frozen_array(self.features)
        y = _frozen_array(self.target)
        c = _frozen_array(self.coords)
        if X.ndim == 1:
            X = _frozen_array(X.reshape(-1, 1))
        if X.ndim != 2 or y.ndim != 1 or c.ndim != 2 or c.shape[1] != 2:
            raise GeorfError(
                f"bad shapes: features {X.shape}, target {y.shape}, coords {c.shape}"
            )
        n = y.shape[0]
        if n < 2:
            raise EmptyData(f"need at least 2 rows, got {n}")
        if X.shape[0] != n or c.shape[0] != n:
            raise GeorfError(
                f"row counts disagree: features {X.shape[0]}, target {n}, coords {c.shape[0]}"
            )
        if X.shape[1] < 1:
            raise GeorfError("need at least one feature column")
        for name, arr in (("features", X), ("target", y), ("coords", c)):
            if not np.all(np.isfinite(arr)):
                raise GeorfError(f"{name} contains NaN or infinite values")
        names = tuple(str(s) for s in self.feature_names)
        if len(names) != X.shape[1]:
            raise GeorfError(f"{len(names)} feature names for {X.shape[1]} columns")
        if len(set(names)) != len(names):
            raise GeorfError(f"feature names are not unique: {names}")
        ids = tuple(range(n)) if self.row_ids is None else tuple(self.row_ids)
        if len(ids) != n:
            raise GeorfError(f"{len(ids)} row ids for {n} rows")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "target", y)
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "row_ids", ids)
        object.__setattr__(self, "warnings", duplicate_coordinate_warnings(c))

    @property
    def n(self) -> int:
        return self.target.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> SpatialDataset:
        rows = np.asarray(rows, dtype=np.int64)
        return SpatialDataset(
            self.features[rows],
            self.target[rows],
            self.coords[rows],
            self.feature_names,
            tuple(self.row_ids[i] for i in rows),
        )

    def with_target(self, target) -> SpatialDataset:
        return SpatialDataset(
            self.features, target, self.coords, self.feature_names, self.row_ids
        )

    def __eq__(self, other):
        if not isinstance(other, SpatialDataset):
            return NotImplemented
        return (
            self.feature_names == other.feature_names
            and self.row_ids == other.row_ids
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.target, other.target)
            and np.array_equal(self.coords, other.coords)
        )

    __hash__ = None


def duplicate_coordinate_warnings(coords: np.ndarray) -> tuple[str, ...]:
    groups = defaultdict(list)
    for i, (x, y) in enumerate(coords):
        groups[(float(x), float(y))].append(i)
    return tuple(
        f"duplicate coordinates ({x!r}, {y!r}) at rows {rows}"
        for (x, y), rows in groups.items()
        if len(rows) > 1
    )


def _to_float(value, row, column) -> float:
    if isinstance(value, bool):
        raise NonNumericCell(row, column, value)
    try:
        out = float(value.strip() if isinstance(value, str) else value)
    except (TypeError, ValueError):
        raise NonNumericCell(row, column, value) from None
    if not math.isfinite(out):
        raise NonNumericCell(row, column, value)
    return out


def validate_dataset(
    raw,
    *,
    target: str | None = None,
    x: str | None = None,
    y: str | None = None,
    features: Sequence[str] | None = None,
    id_column: str | None = None,
) -> SpatialDataset:
    """Build a validated :class:`SpatialDataset` from a table of rows.

    Parameters
    ----------
    raw : sequence of mappings, or SpatialDataset
        Rows keyed by column name (e.g. ``csv.DictReader`` output). Cells may
        be numbers or numeric strings. A ``SpatialDataset`` is re-validated and
        returned as an equal copy.
    target, x, y : str
        Names of the target and the two coordinate columns.
    features : sequence of str, optional
        Feature columns, in model order. Defaults to every column that is not
        the target, a coordinate or the id column, in header order.
    id_column : str, optional
        Column holding opaque row identifiers (kept as strings).

    Raises
    ------
    EmptyData
        Fewer than two rows.
    MissingColumn
        A designated column is absent.
    NonNumericCell
        A feature, target or coordinate cell is not a finite number. ``row``
        is the 1-based data row number.
    """
    if isinstance(raw, SpatialDataset):
        return SpatialDataset(
            raw.features, raw.target, raw.coords, raw.feature_names, raw.row_ids
        )
    if target is None or x is None or y is None:
        raise GeorfError("target, x and y column names are required")
    rows = list(raw)
    if len(rows) < 2:
        raise EmptyData(f"need at least 2 rows, got {len(rows)}")
    header = list(rows[0].keys()) if isinstance(rows[0], Mapping) else []
    reserved = {target, x, y, id_column}
    if features is None:
        features = [c for c in header if c not in reserved]
    features = list(features)
    for col in [*features, target, x, y] + ([id_column] if id_column else []):
        if col not in header:
            raise MissingColumn(col)

    X = np.empty((len(rows), len(features)))
    t = np.empty(len(rows))
    c = np.empty((len(rows), 2))
    ids = []
    for r, row in enumerate(rows, start=1):
        for col in (*features, target, x, y):
            if col not in row:
                raise MissingColumn(col)
        X[r - 1] = [_to_float(row[f], r, f) for f in features]
        t[r - 1] = _to_float(row[target], r, target)
        c[r - 1] = (_to_float(row[x], r, x), _to_float(row[y], r, y))
        ids.append(str(row[id_column]) if id_column else r - 1)
    return SpatialDataset(X, t, c, tuple(features), tuple(ids))


def resolve_mtry(mtry: MtrySpec, n_features: int) -> int:
    """Turn an mtry setting (int or ``"S"``, ``"S/3"``, ``"sqrt"``) into a count."""
    if isinstance(mtry, str):
        if mtry == "S":
            value = n_features
        elif mtry == "S/3":
            value = max(1, math.ceil(n_features / 3))
        elif mtry == "sqrt":
            value = max(1, math.floor(math.sqrt(n_features) + 0.5))
        else:
            try:
                value = int(mtry)
            except ValueError:
                raise GeorfError(f"unknown mtry setting {mtry!r}") from None
    else:
        value = int(mtry)
    if not 1 <= value <= n_features:
        raise GeorfError(f"mtry={value} outside [1, {n_features}]")
    return value


@dataclass(frozen=True)
class GrfConfig:
    """Hyperparameters and switches for a geographical random forest.

    ``bandwidth_lambda`` is a neighbour count (the size of each local training
    set), not a distance. It may be left as ``None`` only when ``enable_i1`` is
    set, in which case it is chosen by the autocorrelation scan at fit time,
    together with ``local_weight_alpha``.
    """

    ntree: int = 100
    mtry: MtrySpec = "S/3"
    bandwidth_lambda: int | None = None
    local_weight_alpha: float = 0.5
    kernel: str = "bisquare"
    enable_i1: bool = False
    enable_i2: bool = False
    enable_i3: bool = False
    base_seed: int = 0
    min_leaf_size: int = 1
    parallelism: int | str = "auto"
    include_anchor: bool = True

    def __post_init__(self):
        if int(self.ntree) < 1:
            raise GeorfError(f"ntree must be positive, got {self.ntree}")
        if not 0.0 <= float(self.local_weight_alpha) <= 1.0:
            raise GeorfError(f"local_weight_alpha must lie in [0, 1], got {self.local_weight_alpha}")
        if self.kernel not in KERNELS:
            raise GeorfError(f"unknown kernel {self.kernel!r}; choose from {KERNELS}")
        if int(self.min_leaf_size) < 1:
            raise GeorfError("min_leaf_size must be positive")
        if self.bandwidth_lambda is not None and int(self.bandwidth_lambda) < 1:
            raise GeorfError(f"bandwidth_lambda must be positive, got {self.bandwidth_lambda}")
        if isinstance(self.mtry, str):
            if self.mtry not in MTRY_SYMBOLS and not self.mtry.isdigit():
                raise GeorfError(f"unknown mtry setting {self.mtry!r}")
        elif int(self.mtry) < 1:
            raise GeorfError(f"mtry must be positive, got {self.mtry}")
        if self.parallelism != "auto" and int(self.parallelism) < 1:
            raise GeorfError("parallelism must be a positive worker count or 'auto'")

    def replace(self, **changes) -> GrfConfig:
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: Mapping) -> GrfConfig:
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})
