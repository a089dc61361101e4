"""Core value types and compensated summation.

Conventions used across the package: feature matrices are float32,
targets and everything derived from residuals (bias corrections, metrics)
are float64. All containers reject non-finite values at construction, so
downstream numerics never have to re-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DataError,
    InsufficientDataError,
    NonFiniteError,
    ShapeMismatchError,
)

__all__ = [
    "Dataset",
    "SplitIndices",
    "EvalReport",
    "BiasCorrection",
    "compensated_sum",
    "compensated_mean",
]


def _first_nonfinite(arr: np.ndarray):
    """Index tuple of the first non-finite entry, or None."""
    mask = ~np.isfinite(arr)
    if not mask.any():
        return None
    flat = int(np.flatnonzero(mask)[0])
    return np.unravel_index(flat, arr.shape)


def compensated_sum(values) -> float:
    """Sum of ``values`` computed with exact (compensated) accumulation.

    The result is the correctly rounded float64 sum of the inputs, so it
    is independent of input order. Raises :class:`NonFiniteError` naming
    the first offending index if any value is NaN or infinite.
    """
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        return 0.0
    bad = _first_nonfinite(arr)
    if bad is not None:
        raise NonFiniteError(
            f"non-finite value at index {bad[0]} in summation input", index=bad[0]
        )
    return math.fsum(arr.tolist())


def compensated_mean(values) -> float:
    """Compensated sum divided by the number of values (>= 1 required)."""
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise InsufficientDataError("mean of an empty sequence is undefined")
    return compensated_sum(arr) / arr.size


@dataclass(frozen=True)
class Dataset:
    """An immutable supervised-regression dataset.

    features : (n, f) float32, f >= 1
    targets  : (n,) float64
    feature_names : one name per column (defaults to x0..x{f-1})
    """

    features: np.ndarray
    targets: np.ndarray
    feature_names: tuple = None

    def __post_init__(self):
        # values that overflow the float32 cast surface as a NonFiniteError
        # below, so the cast itself may warn-free produce infinities
        with np.errstate(over="ignore"):
            feats = np.array(self.features, dtype=np.float32, copy=True)
        targs = np.array(self.targets, dtype=np.float64, copy=True)
        if feats.ndim != 2:
            raise ShapeMismatchError(
                f"features must be 2-D (n, f), got shape {feats.shape}"
            )
        if targs.ndim != 1:
            raise ShapeMismatchError(
                f"targets must be 1-D, got shape {targs.shape}"
            )
        if feats.shape[0] != targs.shape[0]:
            raise ShapeMismatchError(
                f"{feats.shape[0]} feature rows but {targs.shape[0]} targets"
            )
        if feats.shape[0] < 1:
            raise InsufficientDataError("dataset must contain at least one row")
        if feats.shape[1] < 1:
            raise ShapeMismatchError("dataset must have at least one feature column")
        bad = _first_nonfinite(feats)
        if bad is not None:
            raise NonFiniteError(
                f"non-finite feature at row {bad[0]}, column {bad[1]}", index=bad
            )
        bad = _first_nonfinite(targs)
        if bad is not None:
            raise NonFiniteError(
                f"non-finite target at row {bad[0]}", index=bad[0]
            )
        names = self.feature_names
        if names is None:
            names = tuple(f"x{i}" for i in range(feats.shape[1]))
        else:
            names = tuple(str(n) for n in names)
            if len(names) != feats.shape[1]:
                raise ShapeMismatchError(
                    f"{len(names)} feature names for {feats.shape[1]} columns"
                )
        feats.setflags(write=False)
        targs.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "targets", targs)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_points(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        """New Dataset holding the rows selected by ``indices`` (in order)."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.targets[idx], self.feature_names)


@dataclass(frozen=True)
class SplitIndices:
    """Disjoint train/val/test row indices covering 0..n-1, plus the seed used."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int

    def __post_init__(self):
        parts = {}
        for name in ("train", "val", "test"):
            arr = np.array(getattr(self, name), dtype=np.int64, copy=True)
            if arr.ndim != 1:
                raise ShapeMismatchError(f"{name} indices must be 1-D")
            arr.setflags(write=False)
            parts[name] = arr
            object.__setattr__(self, name, arr)
        combined = np.sort(np.concatenate([parts["train"], parts["val"], parts["test"]]))
        n = combined.size
        if n == 0 or not np.array_equal(combined, np.arange(n)):
            raise DataError(
                "train/val/test must be a disjoint partition of 0..n-1"
            )
        if not (0 <= int(self.seed) < 2**64):
            raise DataError("seed must fit in an unsigned 64-bit integer")
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def n_total(self) -> int:
        return self.train.size + self.val.size + self.test.size


def _check_finite_scalar(value: float, what: str) -> float:
    v = float(value)
    if not math.isfinite(v):
        raise NonFiniteError(f"{what} must be finite, got {v!r}")
    return v


@dataclass(frozen=True)
class EvalReport:
    """Metrics of one model on one evaluation set.

    ``delta_abs`` is the absolute sum of residuals, ``delta_rel`` the same
    divided by |sum of targets| (a plain ratio; multiply by 100 to quote a
    percentage), ``rse`` the mean per-point relative residual in percent.
    """

    mse: float
    r2: float
    delta_abs: float
    delta_rel: float
    rse: float
    n: int

    def __post_init__(self):
        for name in ("mse", "r2", "delta_abs", "delta_rel", "rse"):
            object.__setattr__(
                self, name, _check_finite_scalar(getattr(self, name), name)
            )
        if self.mse < 0:
            raise DataError(f"mse must be >= 0, got {self.mse}")
        if self.delta_abs < 0 or self.delta_rel < 0:
            raise DataError("delta_abs and delta_rel must be >= 0")
        n = int(self.n)
        if n < 1:
            raise InsufficientDataError("EvalReport needs n >= 1")
        object.__setattr__(self, "n", n)

    def to_dict(self) -> dict:
        return {
            "mse": self.mse,
            "r2": self.r2,
            "delta_abs": self.delta_abs,
            "delta_rel": self.delta_rel,
            "rse": self.rse,
            "n": self.n,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            mse=d["mse"],
            r2=d["r2"],
            delta_abs=d["delta_abs"],
            delta_rel=d["delta_rel"],
            rse=d["rse"],
            n=d["n"],
        )


@dataclass(frozen=True)
class BiasCorrection:
    """An additive shift for a model's output bias.

    ``delta_b`` is the mean residual (targets minus predictions) of the
    model on the calibration set; adding it to the output bias makes the
    calibration residuals sum to zero. ``source_tag`` is a free-form label
    recording which data the correction was computed on.
    """

    delta_b: float
    n_calibration: int
    source_tag: str = ""

    def __post_init__(self):
        object.__setattr__(
            self, "delta_b", _check_finite_scalar(self.delta_b, "delta_b")
        )
        n = int(self.n_calibration)
        if n < 1:
            raise InsufficientDataError("correction needs n_calibration >= 1")
        object.__setattr__(self, "n_calibration", n)
        object.__setattr__(self, "source_tag", str(self.source_tag))

    def to_dict(self) -> dict:
        # delta_b as a decimal string: exact float64 round-trip.
        return {
            "delta_b": repr(self.delta_b),
            "n_calibration": self.n_calibration,
            "source_tag": self.source_tag,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BiasCorrection":
        return cls(
            delta_b=float(d["delta_b"]),
            n_calibration=d["n_calibration"],
            source_tag=d.get("source_tag", ""),
        )
