"""Dataset ingestion, standardization, splits, and the synthetic generator.

Datasets are immutable (X, Y) float64 matrix pairs with provenance. CSV
serialization uses repr() floats, so a save/load round trip reproduces the
arrays bit-exactly. Standardization statistics always come from a training
split and are applied unchanged to other splits (no leakage).
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "DataError",
    "Dataset",
    "ScalerStats",
    "load_csv",
    "save_csv",
    "standardize",
    "split",
    "subsample",
    "gen_heteroscedastic",
    "hetero_sigma",
    "builtin_names",
    "load_builtin",
]

BUILTIN_NAMES = ("california_housing", "boston_housing", "energy_efficiency")


class DataError(ValueError):
    """Malformed or unusable dataset input."""


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    name: str = "dataset"
    provenance: str = ""
    scaler: "ScalerStats | None" = None
    x_names: tuple[str, ...] = ()
    y_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        Y = np.asarray(self.Y, dtype=np.float64)
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.ndim != 2 or Y.ndim != 2:
            raise DataError("X and Y must be 2-d matrices")
        if X.shape[0] != Y.shape[0]:
            raise DataError(f"row mismatch: X has {X.shape[0]} rows, Y has {Y.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise DataError("dataset contains non-finite entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        if not self.x_names:
            object.__setattr__(self, "x_names", tuple(f"x{i}" for i in range(X.shape[1])))
        if not self.y_names:
            object.__setattr__(self, "y_names", tuple(f"y{i}" for i in range(Y.shape[1])))

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_targets(self) -> int:
        return self.Y.shape[1]

    def take(self, rows: np.ndarray, suffix: str = "") -> "Dataset":
        return replace(
            self, X=self.X[rows], Y=self.Y[rows],
            name=self.name + suffix,
        )

    def select_targets(self, columns: list[int]) -> "Dataset":
        return replace(
            self,
            Y=self.Y[:, columns],
            y_names=tuple(self.y_names[c] for c in columns),
        )


@dataclass(frozen=True)
class ScalerStats:
    """Per-column means/stds from a training split (population std).

    ``x_kept`` lists the feature columns retained after dropping
    zero-variance ones; targets with zero variance are an error.
    """

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray
    x_kept: tuple[int, ...]

    def transform(self, dataset: Dataset) -> Dataset:
        X = (dataset.X[:, list(self.x_kept)] - self.x_mean) / self.x_std
        Y = (dataset.Y - self.y_mean) / self.y_std
        return replace(
            dataset, X=X, Y=Y, scaler=self,
            x_names=tuple(dataset.x_names[i] for i in self.x_kept),
        )


def load_csv(path, target_columns, header: bool = True, delimiter: str = ",",
             name: str | None = None) -> Dataset:
    """Load a numeric CSV, splitting target columns out of the feature matrix.

    ``target_columns`` may be column names (requires a header) or 0-based
    indices. Any blank or unparseable field fails with the offending
    row/column.
    """
    rows: list[list[float]] = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle, delimiter=delimiter)
        columns: list[str] | None = None
        if header:
            try:
                columns = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file") from None
        for i, record in enumerate(reader):
            if not record:
                continue
            if columns is not None and len(record) != len(columns):
                raise DataError(f"{path}: row {i} has {len(record)} fields, expected {len(columns)}")
            try:
                rows.append([float(field) for field in record])
            except ValueError:
                bad = next(j for j, field in enumerate(record) if not _parses(field))
                raise DataError(
                    f"{path}: row {i}, column {bad}: cannot parse {record[bad]!r} as a number"
                ) from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=np.float64)
    n_cols = data.shape[1]
    if columns is None:
        columns = [f"c{i}" for i in range(n_cols)]

    target_idx: list[int] = []
    for t in target_columns:
        if isinstance(t, str):
            if not header:
                raise DataError("target column names require header=True")
            if t not in columns:
                raise DataError(f"{path}: no column named {t!r}")
            target_idx.append(columns.index(t))
        else:
            idx = int(t)
            if idx < 0:
                idx += n_cols
            if not 0 <= idx < n_cols:
                raise DataError(f"{path}: target index {t} out of range 0..{n_cols - 1}")
            target_idx.append(idx)
    if not target_idx:
        raise DataError("at least one target column is required")
    feature_idx = [i for i in range(n_cols) if i not in target_idx]
    if not feature_idx:
        raise DataError("no feature columns remain after removing targets")
    return Dataset(
        X=data[:, feature_idx],
        Y=data[:, target_idx],
        name=name or str(path),
        provenance=str(path),
        x_names=tuple(columns[i] for i in feature_idx),
        y_names=tuple(columns[i] for i in target_idx),
    )


def _parses(field: str) -> bool:
    try:
        float(field)
        return True
    except ValueError:
        return False


def save_csv(dataset: Dataset, path, header: bool = True) -> None:
    """Write features then targets as CSV with round-trip float formatting."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        if header:
            writer.writerow(list(dataset.x_names) + list(dataset.y_names))
        for xrow, yrow in zip(dataset.X, dataset.Y):
            writer.writerow([repr(float(v)) for v in xrow] + [repr(float(v)) for v in yrow])


def standardize(train: Dataset, others: list[Dataset] = ()) -> tuple[list[Dataset], ScalerStats]:
    """Shift/scale every column to the training split's mean and std.

    Returns ([scaled train, scaled others...], stats). Zero-variance feature
    columns are dropped (and logged); a zero-variance target is an error.
    """
    if train.n_rows == 0:
        raise DataError("cannot standardize an empty training split")
    x_mean = train.X.mean(axis=0)
    x_std = train.X.std(axis=0)
    kept = tuple(int(i) for i in np.nonzero(x_std > 0)[0])
    if len(kept) < train.n_features:
        dropped = sorted(set(range(train.n_features)) - set(kept))
        log.warning(
            "dropping zero-variance feature columns %s from %s",
            [train.x_names[i] for i in dropped], train.name,
        )
    if not kept:
        raise DataError("all feature columns have zero variance")
    y_mean = train.Y.mean(axis=0)
    y_std = train.Y.std(axis=0)
    if np.any(y_std == 0):
        bad = [train.y_names[i] for i in np.nonzero(y_std == 0)[0]]
        raise DataError(f"zero-variance target column(s): {bad}")
    stats = ScalerStats(
        x_mean=x_mean[list(kept)], x_std=x_std[list(kept)],
        y_mean=y_mean, y_std=y_std, x_kept=kept,
    )
    return [stats.transform(d) for d in (train, *others)], stats


def split(dataset: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic row partition: round(fraction*m) rows vs the rest."""
    if not 0.0 < fraction < 1.0:
        raise DataError(f"split fraction must lie in (0, 1), got {fraction}")
    m = dataset.n_rows
    n_first = int(round(fraction * m))
    if n_first == 0 or n_first == m:
        raise DataError(f"split of {m} rows at fraction {fraction} leaves an empty part")
    order = np.random.default_rng(seed).permutation(m)
    return dataset.take(order[:n_first]), dataset.take(order[n_first:])


def subsample(dataset: Dataset, fraction: float, seed: int) -> Dataset:
    """Deterministic row subsample of round(fraction*m) rows."""
    if not 0.0 < fraction <= 1.0:
        raise DataError(f"subsample fraction must lie in (0, 1], got {fraction}")
    if fraction == 1.0:
        return dataset
    m = dataset.n_rows
    k = max(1, int(round(fraction * m)))
    rows = np.random.default_rng(seed).permutation(m)[:k]
    return dataset.take(rows, suffix=f"[{fraction:g}]")


def hetero_sigma(x) -> np.ndarray:
    """Input-dependent noise scale of the synthetic set: 0.1 * exp(1 - x)."""
    return 0.1 * np.exp(1.0 - np.asarray(x, dtype=np.float64))


_SMOOTH_FUNCTIONS = {
    "sine_ramp": lambda x: np.sin(2.0 * np.pi * x) * x + 0.5,
    "linear": lambda x: 2.0 * x - 0.5,
}


def gen_heteroscedastic(count: int, seed: int, f_kind: str = "sine_ramp") -> Dataset:
    """Single-feature dataset with input-dependent Gaussian noise.

    x ~ Uniform[0, 1]; y = f(x) + eps with eps ~ Normal(0, sigma(x)^2) and
    sigma(x) = 0.1 * exp(1 - x). Deterministic given (count, seed, f_kind).
    """
    if count < 1:
        raise DataError(f"count must be >= 1, got {count}")
    if f_kind not in _SMOOTH_FUNCTIONS:
        raise DataError(f"unknown f_kind {f_kind!r}; expected one of {sorted(_SMOOTH_FUNCTIONS)}")
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=count)
    y = _SMOOTH_FUNCTIONS[f_kind](x) + rng.normal(0.0, 1.0, size=count) * hetero_sigma(x)
    return Dataset(
        X=x[:, None], Y=y[:, None],
        name=f"heteroscedastic_{f_kind}",
        provenance=f"gen_heteroscedastic(count={count}, seed={seed}, f_kind={f_kind!r}, "
                   f"sigma=0.1*exp(1-x), x~U[0,1])",
        x_names=("x",), y_names=("y",),
    )


def builtin_names() -> tuple[str, ...]:
    return BUILTIN_NAMES


def _builtin_dir():
    return resources.files("lalr") / "datasets"


def load_builtin(name: str) -> Dataset:
    """Load one of the shipped benchmark datasets by manifest name."""
    if name not in BUILTIN_NAMES:
        raise DataError(f"unknown builtin dataset {name!r}; available: {BUILTIN_NAMES}")
    base = _builtin_dir()
    manifest = json.loads((base / f"{name}.manifest.json").read_text(encoding="utf-8"))
    with resources.as_file(base / manifest["file"]) as path:
        ds = load_csv(path, manifest["target_columns"], header=True, name=name)
    return replace(ds, provenance=manifest["provenance"])


def builtin_manifest(name: str) -> dict:
    if name not in BUILTIN_NAMES:
        raise DataError(f"unknown builtin dataset {name!r}; available: {BUILTIN_NAMES}")
    return json.loads((_builtin_dir() / f"{name}.manifest.json").read_text(encoding="utf-8"))
