"""Data loading, benchmark split protocols, windowing, and scaling.

CSV files are parsed against a small column schema (name + role per column);
rows containing the missing-value token are dropped, anything else
unparseable is an error that names the offending record.  Time series are
turned into one-step-ahead regression sets by sliding a lag window.  Min-max
scaling is fitted on training rows only and applied to both splits.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError

ROLES = ("feature", "target", "ignore")


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    role: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise DataError(f"column {self.name!r} has unknown role {self.role!r}")


@dataclass
class CsvSchema:
    """Column layout of a data file: which columns feed the model and which
    one is predicted.  Exactly one target, at least one feature."""

    columns: list[ColumnSpec]
    missing_token: str = "?"
    has_header: bool = True

    def __post_init__(self) -> None:
        targets = [c for c in self.columns if c.role == "target"]
        features = [c for c in self.columns if c.role == "feature"]
        if len(targets) != 1:
            raise DataError(f"schema must declare exactly one target column, got {len(targets)}")
        if not features:
            raise DataError("schema must declare at least one feature column")

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.columns if c.role == "feature"]

    @property
    def target_name(self) -> str:
        return next(c.name for c in self.columns if c.role == "target")

    @classmethod
    def from_json(cls, path) -> "CsvSchema":
        try:
            payload = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read schema file {path}: {exc}") from exc
        if not isinstance(payload, dict) or "columns" not in payload:
            raise DataError(f"schema file {path} must be an object with a 'columns' list")
        known = {"columns", "missing_token", "has_header"}
        unknown = payload.keys() - known
        if unknown:
            raise DataError(f"schema file {path} has unknown keys: {sorted(unknown)}")
        try:
            columns = [ColumnSpec(entry["name"], entry["role"]) for entry in payload["columns"]]
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed column entry in schema file {path}: {exc}") from exc
        return cls(columns=columns,
                   missing_token=payload.get("missing_token", "?"),
                   has_header=payload.get("has_header", True))


@dataclass
class Scaler:
    """Min-max scaling fitted on training rows; constant columns map to 0."""

    feature_offset: np.ndarray
    feature_scale: np.ndarray
    target_offset: float
    target_scale: float

    def transform_inputs(self, inputs: np.ndarray) -> np.ndarray:
        return (np.asarray(inputs, float) - self.feature_offset) / self.feature_scale

    def transform_targets(self, targets: np.ndarray) -> np.ndarray:
        return (np.asarray(targets, float) - self.target_offset) / self.target_scale

    def invert_targets(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, float) * self.target_scale + self.target_offset

    def to_dict(self) -> dict:
        return {
            "feature_offset": self.feature_offset.tolist(),
            "feature_scale": self.feature_scale.tolist(),
            "target_offset": self.target_offset,
            "target_scale": self.target_scale,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Scaler":
        try:
            return cls(
                feature_offset=np.asarray(payload["feature_offset"], dtype=float),
                feature_scale=np.asarray(payload["feature_scale"], dtype=float),
                target_offset=float(payload["target_offset"]),
                target_scale=float(payload["target_scale"]),
            )
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed scaler document: {exc}") from exc


@dataclass
class Dataset:
    """A named (inputs, targets) pair with split and scaling provenance."""

    name: str
    inputs: np.ndarray
    targets: np.ndarray
    split: str = "all"
    scaler: Scaler | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        if self.inputs.ndim != 2:
            raise DataError(f"dataset inputs must be 2-D, got shape {self.inputs.shape}")
        if self.targets.shape != (len(self.inputs),):
            raise DataError(
                f"dataset targets have shape {self.targets.shape}, "
                f"expected ({len(self.inputs)},)")

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def __len__(self) -> int:
        return len(self.inputs)


def _read_records(path) -> list[list[str]]:
    try:
        with open(path, newline="") as handle:
            return [row for row in csv.reader(handle)]
    except OSError as exc:
        raise DataError(f"cannot read data file {path}: {exc}") from exc


def _default_schema(records: list[list[str]]) -> CsvSchema:
    """Last column is the target, the rest are features; header sniffed."""
    first = records[0]

    def numeric(cell: str) -> bool:
        try:
            float(cell)
            return True
        except ValueError:
            return False

    has_header = not all(numeric(cell) for cell in first)
    names = first if has_header else [f"x{i + 1}" for i in range(len(first))]
    columns = [ColumnSpec(name, "feature") for name in names[:-1]]
    columns.append(ColumnSpec(names[-1], "target"))
    return CsvSchema(columns=columns, has_header=has_header)


def load_csv(path, schema: CsvSchema | None = None, name: str | None = None) -> Dataset:
    """Parse a CSV file into a Dataset.

    Rows whose feature or target cell equals the schema's missing token (or
    is empty) are dropped and counted; any other unparseable cell raises a
    DataError naming the record.  Record numbers are 1-based and include the
    header row when present.
    """
    records = _read_records(path)
    if not records:
        raise DataError(f"data file {path} is empty")
    if schema is None:
        schema = _default_schema(records)

    start = 0
    if schema.has_header:
        header = records[0]
        start = 1
        index = {cell.strip(): i for i, cell in enumerate(header)}
        try:
            feature_idx = [index[n] for n in schema.feature_names]
            target_idx = index[schema.target_name]
        except KeyError as exc:
            raise DataError(f"data file {path} is missing column {exc}") from exc
        width = len(header)
    else:
        feature_idx = [i for i, c in enumerate(schema.columns) if c.role == "feature"]
        target_idx = next(i for i, c in enumerate(schema.columns) if c.role == "target")
        width = len(schema.columns)

    rows, targets, dropped = [], [], 0
    for record_no, record in enumerate(records[start:], start=start + 1):
        if len(record) != width:
            raise DataError(
                f"{path}, record {record_no}: expected {width} fields, got {len(record)}")
        cells = [record[i].strip() for i in feature_idx] + [record[target_idx].strip()]
        if any(cell == schema.missing_token or cell == "" for cell in cells):
            dropped += 1
            continue
        try:
            values = [float(cell) for cell in cells]
        except ValueError as exc:
            raise DataError(f"{path}, record {record_no}: {exc}") from exc
        rows.append(values[:-1])
        targets.append(values[-1])

    if not rows:
        raise DataError(f"data file {path} contains no usable rows")
    return Dataset(
        name=name or Path(path).stem,
        inputs=np.asarray(rows, dtype=float),
        targets=np.asarray(targets, dtype=float),
        meta={"source": str(path), "dropped_rows": dropped},
    )


def load_series(path, column: str | int | None = None) -> np.ndarray:
    """Read one numeric column from a CSV as a 1-D series, file order kept.

    Defaults to the column named 'close' when a header provides one, else
    the last column.  Every row must parse; gaps are errors because windowed
    series must stay contiguous.
    """
    records = _read_records(path)
    if not records:
        raise DataError(f"data file {path} is empty")

    def numeric(cell: str) -> bool:
        try:
            float(cell)
            return True
        except ValueError:
            return False

    has_header = not all(numeric(cell) for cell in records[0])
    start = 1 if has_header else 0
    if isinstance(column, str):
        if not has_header:
            raise DataError(f"data file {path} has no header to resolve column {column!r}")
        names = [cell.strip() for cell in records[0]]
        if column not in names:
            raise DataError(f"data file {path} has no column named {column!r}")
        idx = names.index(column)
    elif isinstance(column, int):
        idx = column
    else:
        idx = len(records[0]) - 1
        if has_header:
            lowered = [cell.strip().lower() for cell in records[0]]
            if "close" in lowered:
                idx = lowered.index("close")

    values = []
    for record_no, record in enumerate(records[start:], start=start + 1):
        if idx >= len(record):
            raise DataError(f"{path}, record {record_no}: fewer than {idx + 1} fields")
        try:
            values.append(float(record[idx]))
        except ValueError as exc:
            raise DataError(f"{path}, record {record_no}: {exc}") from exc
    if not values:
        raise DataError(f"data file {path} contains no usable rows")
    return np.asarray(values, dtype=float)


def load_matrix(path) -> np.ndarray:
    """Read a CSV of purely numeric columns (header sniffed) as an (N, d) array.

    Used for prediction inputs that carry no target column; every cell must
    parse, and errors name the offending record.
    """
    records = _read_records(path)
    if not records:
        raise DataError(f"data file {path} is empty")

    def numeric(cell: str) -> bool:
        try:
            float(cell)
            return True
        except ValueError:
            return False

    start = 0 if all(numeric(cell) for cell in records[0]) else 1
    width = len(records[0])
    rows = []
    for record_no, record in enumerate(records[start:], start=start + 1):
        if len(record) != width:
            raise DataError(
                f"{path}, record {record_no}: expected {width} fields, got {len(record)}")
        try:
            rows.append([float(cell) for cell in record])
        except ValueError as exc:
            raise DataError(f"{path}, record {record_no}: {exc}") from exc
    if not rows:
        raise DataError(f"data file {path} contains no usable rows")
    return np.asarray(rows, dtype=float)


@dataclass(frozen=True)
class WindowSpec:
    """One-step-ahead sliding window: lag past values predict the next one."""

    lag: int
    horizon: int = 1

    def __post_init__(self) -> None:
        if not (isinstance(self.lag, int) and self.lag >= 1):
            raise ConfigurationError(f"lag must be a positive integer, got {self.lag!r}")
        if self.horizon != 1:
            raise ConfigurationError("only one-step-ahead windows are supported")


def windowize(series: np.ndarray, spec: WindowSpec, name: str = "series") -> Dataset:
    """Slide a lag window over the series; yields len(series) - lag rows."""
    series = np.asarray(series, dtype=float).ravel()
    if len(series) <= spec.lag:
        raise DataError(
            f"series of length {len(series)} is too short for lag {spec.lag}")
    count = len(series) - spec.lag
    inputs = np.stack([series[k:k + spec.lag] for k in range(count)])
    targets = series[spec.lag:]
    return Dataset(name=name, inputs=inputs, targets=targets,
                   meta={"lag": spec.lag})


def fit_scaler(data: Dataset) -> Scaler:
    """Min-max statistics of one dataset (call on the training split)."""
    lo = data.inputs.min(axis=0)
    hi = data.inputs.max(axis=0)
    scale = hi - lo
    scale[scale == 0.0] = 1.0  # constant column: map to 0, round-trip intact
    t_lo = float(data.targets.min())
    t_scale = float(data.targets.max()) - t_lo
    if t_scale == 0.0:
        t_scale = 1.0
    return Scaler(feature_offset=lo, feature_scale=scale,
                  target_offset=t_lo, target_scale=t_scale)


def normalize(data: Dataset, scaler: Scaler | None = None) -> Dataset:
    """Apply min-max scaling; fits on ``data`` itself when no scaler is given.

    Fit on the training split and pass the resulting scaler in for the test
    split so test statistics never influence the scaling.
    """
    if scaler is None:
        scaler = fit_scaler(data)
    return Dataset(
        name=data.name,
        inputs=scaler.transform_inputs(data.inputs),
        targets=scaler.transform_targets(data.targets),
        split=data.split,
        scaler=scaler,
        meta={**data.meta, "normalized": True},
    )


def denormalize(predictions: np.ndarray, scaler: Scaler) -> np.ndarray:
    """Map model outputs back to original target units."""
    return scaler.invert_targets(predictions)


@dataclass(frozen=True)
class SplitProtocol:
    """How a benchmark carves its data into train and test."""

    name: str
    kind: str                 # random | chronological | overlap | all
    expected_n: int | None
    n_train: int | None
    n_test: int | None
    lag: int | None           # stock protocols window their series first
    original_units: bool      # report RMSE in original target units
    default_eta0: float


PROTOCOLS: dict[str, SplitProtocol] = {p.name: p for p in [
    SplitProtocol("auto_mpg_case1", "random", 392, 320, 72, None, False, 1e-3),
    SplitProtocol("auto_mpg_case2", "random", 392, 196, 196, None, False, 1e-3),
    SplitProtocol("abalone", "random", 4177, 3000, 1177, None, False, 1e-4),
    SplitProtocol("california_case1", "random", 20640, 8000, 12640, None, False, 1e-4),
    SplitProtocol("california_case2", "random", 20640, 10320, 10320, None, False, 1e-4),
    SplitProtocol("google_stock", "overlap", None, None, None, 3, True, 1e-3),
    SplitProtocol("sydney_stock", "chronological", None, 1260, None, 4, True, 1e-3),
    # Utility protocol: train on the whole file, no held-out split.
    SplitProtocol("all", "all", None, None, None, None, False, 1e-3),
]}


def get_protocol(name: str) -> SplitProtocol:
    try:
        return PROTOCOLS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown protocol {name!r}; known: {', '.join(sorted(PROTOCOLS))}") from None


def split(data: Dataset, protocol: str, seed: int = 0) -> tuple[Dataset, Dataset | None]:
    """Carve a dataset according to a named protocol.

    Random protocols shuffle with the given seed and demand the exact
    expected row count; the chronological protocol keeps file order; the
    overlap protocol trains and tests on the full set.
    """
    proto = get_protocol(protocol)
    n = len(data)
    if proto.expected_n is not None and n != proto.expected_n:
        raise DataError(
            f"protocol {protocol!r} expects {proto.expected_n} rows, got {n}")

    def carve(idx, role):
        return Dataset(name=data.name, inputs=data.inputs[idx], targets=data.targets[idx],
                       split=role, meta={**data.meta, "protocol": protocol, "seed": seed})

    if proto.kind == "random":
        rng = np.random.default_rng(seed)
        perm = rng.permutation(n)
        train = carve(perm[:proto.n_train], "train")
        test = carve(perm[proto.n_train:], "test")
        if len(test) != proto.n_test:
            raise DataError(
                f"protocol {protocol!r} expects a test split of {proto.n_test}, got {len(test)}")
        return train, test
    if proto.kind == "chronological":
        if n <= proto.n_train:
            raise DataError(
                f"protocol {protocol!r} needs more than {proto.n_train} rows, got {n}")
        idx = np.arange(n)
        return carve(idx[:proto.n_train], "train"), carve(idx[proto.n_train:], "test")
    if proto.kind == "overlap":
        idx = np.arange(n)
        return carve(idx, "train"), carve(idx, "test")
    idx = np.arange(n)
    return carve(idx, "train"), None


def builtin_schema(name: str) -> CsvSchema | None:
    """Column schemas for the bundled benchmark files."""
    if name in ("auto_mpg_case1", "auto_mpg_case2", "autompg"):
        return CsvSchema(columns=[
            ColumnSpec("mpg", "target"),
            ColumnSpec("cylinders", "feature"),
            ColumnSpec("displacement", "feature"),
            ColumnSpec("horsepower", "feature"),
            ColumnSpec("weight", "feature"),
            ColumnSpec("acceleration", "feature"),
            ColumnSpec("model_year", "feature"),
        ])
    if name == "abalone":
        return CsvSchema(columns=[
            ColumnSpec("sex", "feature"),
            ColumnSpec("length", "feature"),
            ColumnSpec("diameter", "feature"),
            ColumnSpec("height", "feature"),
            ColumnSpec("whole_weight", "feature"),
            ColumnSpec("shucked_weight", "feature"),
            ColumnSpec("viscera_weight", "feature"),
            ColumnSpec("shell_weight", "feature"),
            ColumnSpec("rings", "target"),
        ])
    if name in ("california_case1", "california_case2", "california"):
        return CsvSchema(columns=[
            ColumnSpec("median_income", "feature"),
            ColumnSpec("house_age", "feature"),
            ColumnSpec("avg_rooms", "feature"),
            ColumnSpec("avg_bedrooms", "feature"),
            ColumnSpec("population", "feature"),
            ColumnSpec("avg_occupancy", "feature"),
            ColumnSpec("latitude", "feature"),
            ColumnSpec("longitude", "feature"),
            ColumnSpec("median_value", "target"),
        ])
    return None
