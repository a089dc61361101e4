"""Data ingest: CSV loading, splits, standardization, synthetic tasks."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .core import Dataset, SplitIndices
from .errors import (
    ConfigError,
    DataError,
    DegenerateDataError,
    ShapeMismatchError,
)

__all__ = [
    "CsvSchema",
    "GAS_TURBINE_SCHEMA",
    "GAS_TURBINE_ROWS",
    "load_csv",
    "write_dataset_cache",
    "SplitSpec",
    "make_split",
    "Standardizer",
    "fit_standardizer",
    "apply_standardizer",
    "invert_standardizer",
    "SynthSpec",
    "SyntheticTruth",
    "generate_synthetic",
    "synthetic_truth",
]


@dataclass(frozen=True)
class CsvSchema:
    """Which columns of a CSV make up the features and the target."""

    feature_columns: tuple
    target_column: str
    delimiter: str = ","
    has_header: bool = True

    def __post_init__(self):
        cols = tuple(str(c) for c in self.feature_columns)
        if len(cols) == 0:
            raise ConfigError("schema needs at least one feature column")
        target = str(self.target_column)
        if target in cols:
            raise ConfigError(f"target column {target!r} also listed as a feature")
        if len(set(cols)) != len(cols):
            raise ConfigError("duplicate feature column names in schema")
        object.__setattr__(self, "feature_columns", cols)
        object.__setattr__(self, "target_column", target)

    def to_dict(self) -> dict:
        return {
            "feature_columns": list(self.feature_columns),
            "target_column": self.target_column,
            "delimiter": self.delimiter,
            "has_header": self.has_header,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CsvSchema":
        return cls(
            feature_columns=tuple(d["feature_columns"]),
            target_column=d["target_column"],
            delimiter=d.get("delimiter", ","),
            has_header=d.get("has_header", True),
        )


# Hourly gas-turbine sensor data (UCI "Gas Turbine CO and NOx Emission Data
# Set"): nine ambient/process variables plus NOx as predictors of CO.
GAS_TURBINE_SCHEMA = CsvSchema(
    feature_columns=("AT", "AP", "AH", "AFDP", "GTEP", "TIT", "TAT", "TEY", "CDP", "NOX"),
    target_column="CO",
)
GAS_TURBINE_ROWS = 36733


def _numeric_column(frame: pd.DataFrame, column: str, path) -> np.ndarray:
    if column not in frame.columns:
        raise DataError(f"column {column!r} missing from {path}")
    values = pd.to_numeric(frame[column], errors="coerce").to_numpy(dtype=np.float64)
    bad = ~np.isfinite(values)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise DataError(
            f"non-numeric or non-finite value in column {column!r} "
            f"of {path}, data row {row}"
        )
    return values


def load_csv(paths, schema: CsvSchema, expected_rows: int | None = None) -> Dataset:
    """Load one or more CSV files into a single Dataset.

    Files are concatenated verbatim in the order given. Every schema column
    must parse as a finite number in every row; violations raise
    :class:`DataError` naming file, row and column.
    """
    if isinstance(paths, (str, Path)):
        paths = [paths]
    if not paths:
        raise ConfigError("no CSV paths given")

    feature_parts, target_parts = [], []
    for path in paths:
        path = Path(path)
        if not path.exists():
            raise DataError(f"CSV file not found: {path}")
        # round_trip: the default float parser is ~1 ulp off, which would
        # break byte-exact cache round trips
        if schema.has_header:
            frame = pd.read_csv(path, sep=schema.delimiter,
                                float_precision="round_trip")
        else:
            frame = pd.read_csv(path, sep=schema.delimiter, header=None,
                                float_precision="round_trip")
            frame.columns = [f"c{i}" for i in range(frame.shape[1])]
        cols = [_numeric_column(frame, c, path) for c in schema.feature_columns]
        target_parts.append(_numeric_column(frame, schema.target_column, path))
        feature_parts.append(np.column_stack(cols))

    features = np.concatenate(feature_parts, axis=0)
    targets = np.concatenate(target_parts, axis=0)
    if expected_rows is not None and features.shape[0] != expected_rows:
        raise DataError(
            f"expected {expected_rows} rows, loaded {features.shape[0]}"
        )
    return Dataset(
        features.astype(np.float32),
        targets,
        feature_names=schema.feature_columns,
    )


def write_dataset_cache(dataset: Dataset, path, target_column: str = "target") -> dict:
    """Write ``dataset`` as a CSV plus a JSON sidecar (``<path>.json``).

    The sidecar records the schema, the row count and a SHA-256 digest of
    the CSV bytes; returns the sidecar dict. Values are written with full
    round-trip precision, so load_csv reproduces the dataset exactly.
    """
    path = Path(path)
    header = ",".join([*dataset.feature_names, target_column])
    lines = [header]
    feats = dataset.features
    targs = dataset.targets
    for i in range(dataset.n_points):
        row = [repr(float(v)) for v in feats[i]]
        row.append(repr(float(targs[i])))
        lines.append(",".join(row))
    blob = ("\n".join(lines) + "\n").encode("utf-8")
    path.write_bytes(blob)
    sidecar = {
        "schema": CsvSchema(dataset.feature_names, target_column).to_dict(),
        "rows": dataset.n_points,
        "sha256": hashlib.sha256(blob).hexdigest(),
    }
    with open(f"{path}.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return sidecar


@dataclass(frozen=True)
class SplitSpec:
    """Sizes of the train/val/test parts, as counts (ints) or fractions."""

    train: float
    val: float
    test: float

    def resolve(self, n: int) -> tuple:
        vals = (self.train, self.val, self.test)
        if all(float(v).is_integer() for v in vals):
            ints = tuple(int(v) for v in vals)
        else:
            if not np.isclose(sum(float(v) for v in vals), 1.0):
                raise ConfigError("fractional split sizes must sum to 1")
            train = int(round(float(vals[0]) * n))
            val = int(round(float(vals[1]) * n))
            ints = (train, val, n - train - val)
        if sum(ints) != n:
            raise ConfigError(
                f"split sizes {ints} do not sum to the {n} available rows"
            )
        return ints


def make_split(n: int, sizes, seed: int) -> SplitIndices:
    """Randomly partition ``range(n)`` into train/val/test index lists.

    ``sizes`` is a SplitSpec or a (train, val, test) tuple of counts or
    fractions. Every part must get at least 2 rows — downstream statistics
    (variance, R^2) are undefined on empty or singleton sets, so those are
    rejected here rather than at metric time.
    """
    if not isinstance(sizes, SplitSpec):
        sizes = SplitSpec(*sizes)
    counts = sizes.resolve(int(n))
    for name, c in zip(("train", "val", "test"), counts):
        if c < 2:
            raise ConfigError(
                f"{name} split would get {c} rows; every part needs at least 2"
            )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(int(n))
    t, v = counts[0], counts[0] + counts[1]
    return SplitIndices(train=perm[:t], val=perm[t:v], test=perm[v:], seed=seed)


@dataclass(frozen=True)
class Standardizer:
    """Per-feature affine normalization: (x - mean) / std."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64, copy=True).ravel()
        std = np.array(self.std, dtype=np.float64, copy=True).ravel()
        if mean.shape != std.shape:
            raise ShapeMismatchError("standardizer mean/std length mismatch")
        if np.any(std <= 0) or not (np.isfinite(mean).all() and np.isfinite(std).all()):
            raise DataError("standardizer std values must be finite and > 0")
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def n_features(self) -> int:
        return self.mean.size

    def to_dict(self) -> dict:
        return {"mean": [float(v) for v in self.mean],
                "std": [float(v) for v in self.std]}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(mean=np.asarray(d["mean"]), std=np.asarray(d["std"]))


def fit_standardizer(data: Dataset) -> Standardizer:
    """Column means and sample standard deviations (n-1) of the features.

    Targets are never touched. A feature with std <= 1e-12 raises
    :class:`DegenerateDataError` naming the column.
    """
    feats = data.features.astype(np.float64)
    mean = feats.mean(axis=0)
    std = feats.std(axis=0, ddof=1) if data.n_points > 1 else np.zeros(data.n_features)
    flat = np.flatnonzero(std <= 1e-12)
    if flat.size:
        name = data.feature_names[int(flat[0])]
        raise DegenerateDataError(
            f"feature {name!r} has (near-)zero variance; cannot standardize"
        )
    return Standardizer(mean=mean, std=std)


def _check_feature_dim(stats: Standardizer, arr: np.ndarray):
    if arr.shape[-1] != stats.n_features:
        raise ShapeMismatchError(
            f"{arr.shape[-1]} feature columns but standardizer has {stats.n_features}"
        )


def apply_standardizer(stats: Standardizer, features) -> np.ndarray:
    """Standardize a feature row or matrix; float32 in, float32 out."""
    arr = np.asarray(features)
    _check_feature_dim(stats, arr)
    out = (arr.astype(np.float64) - stats.mean) / stats.std
    return out.astype(np.float32)


def invert_standardizer(stats: Standardizer, standardized) -> np.ndarray:
    """Inverse of :func:`apply_standardizer` (up to float32 rounding)."""
    arr = np.asarray(standardized)
    _check_feature_dim(stats, arr)
    out = arr.astype(np.float64) * stats.std + stats.mean
    return out.astype(np.float32)


_GENERATORS = ("linear", "sigmoid-mixture", "piecewise")


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a reproducible synthetic regression dataset."""

    n_points: int
    n_features: int
    generator: str = "linear"
    noise_sigma: float = 0.1
    target_offset: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if int(self.n_points) < 2:
            raise ConfigError("n_points must be >= 2")
        if int(self.n_features) < 1:
            raise ConfigError("n_features must be >= 1")
        if self.generator not in _GENERATORS:
            raise ConfigError(
                f"unknown generator {self.generator!r}; choose from {_GENERATORS}"
            )
        if not (float(self.noise_sigma) >= 0):
            raise ConfigError("noise_sigma must be >= 0")
        object.__setattr__(self, "n_points", int(self.n_points))
        object.__setattr__(self, "n_features", int(self.n_features))
        object.__setattr__(self, "noise_sigma", float(self.noise_sigma))
        object.__setattr__(self, "target_offset", float(self.target_offset))
        object.__setattr__(self, "seed", int(self.seed))

    def to_dict(self) -> dict:
        return {
            "n_points": self.n_points,
            "n_features": self.n_features,
            "generator": self.generator,
            "noise_sigma": self.noise_sigma,
            "target_offset": self.target_offset,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        return cls(**d)


@dataclass(frozen=True)
class SyntheticTruth:
    """Noise-free ground truth of a synthetic task: kind plus drawn parameters."""

    kind: str
    params: dict

    def predict(self, features) -> np.ndarray:
        """Evaluate the noise-free target function (float64)."""
        x = np.asarray(features, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        p = self.params
        if self.kind == "linear":
            out = x @ p["weights"] + p["intercept"]
        elif self.kind == "sigmoid-mixture":
            act = 1.0 / (1.0 + np.exp(-(x @ p["directions"] + p["shifts"])))
            out = act @ p["amplitudes"] + p["intercept"]
        elif self.kind == "piecewise":
            x0 = x[:, 0]
            knots, slopes = p["knots"], p["slopes"]
            out = np.full(x0.shape, p["intercept"], dtype=np.float64)
            out += slopes[0] * np.minimum(x0, knots[0])
            out += slopes[1] * np.clip(x0 - knots[0], 0.0, knots[1] - knots[0])
            out += slopes[2] * np.maximum(x0 - knots[1], 0.0)
            if x.shape[1] > 1:
                out += x[:, 1:] @ p["rest_weights"]
        else:  # pragma: no cover - kind is validated at construction
            raise ConfigError(f"unknown truth kind {self.kind!r}")
        return out[0] if single else out


def _draw_truth(spec: SynthSpec) -> SyntheticTruth:
    rng = np.random.default_rng([spec.seed, 0])
    f = spec.n_features
    intercept = float(rng.uniform(5.0, 15.0))
    if spec.generator == "linear":
        params = {"weights": rng.uniform(-2.0, 2.0, f), "intercept": intercept}
    elif spec.generator == "sigmoid-mixture":
        params = {
            "directions": rng.standard_normal((f, 3)),
            "shifts": rng.uniform(-1.0, 1.0, 3),
            "amplitudes": rng.uniform(1.0, 3.0, 3),
            "intercept": intercept,
        }
    else:  # piecewise
        params = {
            "knots": np.sort(rng.uniform(-1.0, 1.0, 2)),
            "slopes": rng.uniform(-3.0, 3.0, 3),
            "rest_weights": rng.uniform(-1.0, 1.0, max(f - 1, 0)) * 0.3,
            "intercept": intercept,
        }
    return SyntheticTruth(kind=spec.generator, params=params)


def synthetic_truth(spec: SynthSpec) -> SyntheticTruth:
    """Ground truth for ``spec``, recomputable without generating the data."""
    return _draw_truth(spec)


def generate_synthetic(spec: SynthSpec) -> Dataset:
    """Draw the dataset described by ``spec``.

    Targets are truth(features) + N(0, noise_sigma^2) + target_offset; the
    offset emulates a systematic shift between data collection and model
    fitting. Everything is a pure function of the seed.
    """
    truth = _draw_truth(spec)
    rng = np.random.default_rng([spec.seed, 1])
    feats = rng.standard_normal((spec.n_points, spec.n_features)).astype(np.float32)
    base = truth.predict(feats)
    noise = rng.standard_normal(spec.n_points) * spec.noise_sigma
    targets = base + noise + spec.target_offset
    return Dataset(feats, targets)
