"""Evaluation metrics, error-accumulation curves and trial aggregation.

All metrics run in float64 with compensated summation. Besides the usual
MSE and R^2, the quantities of interest here are about *summed* rather
than average behavior:

* absolute total error — |sum of residuals| on a set; a model used to
  estimate a total (annual emissions, say) is judged by this, and it
  grows linearly with set size for a systematically biased model;
* relative total error — the same divided by |sum of targets|, a plain
  ratio (multiply by 100 to quote it in percent);
* relative systematic error — mean of per-point relative residuals,
  in percent.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Dataset, EvalReport, compensated_sum
from .errors import (
    ConfigError,
    DegenerateDataError,
    InsufficientDataError,
    NonFiniteError,
    ShapeMismatchError,
)

__all__ = [
    "mse",
    "r_squared",
    "total_error",
    "total_error_signed",
    "relative_total_error",
    "relative_systematic_error",
    "evaluate_predictions",
    "evaluate_model",
    "AccumulationCurve",
    "CURVE_CSV_HEADER",
    "write_curve_csv",
    "default_size_grid",
    "accumulation_curve",
    "MetricSummary",
    "AggregateReport",
    "aggregate_trials",
]


def _paired(predictions, targets):
    p = np.asarray(predictions, dtype=np.float64).ravel()
    y = np.asarray(targets, dtype=np.float64).ravel()
    if p.shape != y.shape:
        raise ShapeMismatchError(f"{p.size} predictions but {y.size} targets")
    if p.size == 0:
        raise InsufficientDataError("metrics need at least one point")
    if not np.isfinite(p).all():
        raise NonFiniteError("non-finite prediction")
    if not np.isfinite(y).all():
        raise NonFiniteError("non-finite target")
    return p, y


def mse(predictions, targets) -> float:
    """Mean squared residual."""
    p, y = _paired(predictions, targets)
    r = y - p
    return compensated_sum(r * r) / r.size


def r_squared(predictions, targets) -> float:
    """Coefficient of determination, centered on the evaluated set's own mean.

    Constant targets raise :class:`DegenerateDataError`: the ratio is
    undefined there, and a silent NaN would poison aggregates.
    """
    p, y = _paired(predictions, targets)
    if y.max() == y.min():
        raise DegenerateDataError("targets have zero variance; R^2 is undefined")
    y_mean = compensated_sum(y) / y.size
    ss_res = compensated_sum((y - p) ** 2)
    ss_tot = compensated_sum((y - y_mean) ** 2)
    if ss_tot == 0.0:
        raise DegenerateDataError("targets have zero variance; R^2 is undefined")
    return 1.0 - ss_res / ss_tot


def total_error_signed(predictions, targets) -> float:
    """Sum of residuals (targets minus predictions), sign preserved."""
    p, y = _paired(predictions, targets)
    return compensated_sum(y - p)


def total_error(predictions, targets) -> float:
    """Absolute sum of residuals."""
    return abs(total_error_signed(predictions, targets))


def _target_sum(y: np.ndarray) -> float:
    s = compensated_sum(y)
    if abs(s) <= 1e-12 * compensated_sum(np.abs(y)):
        raise DegenerateDataError(
            "sum of targets is (near) zero; relative total error is undefined"
        )
    return s


def relative_total_error(predictions, targets) -> float:
    """Absolute total error divided by |sum of targets| (a plain ratio)."""
    p, y = _paired(predictions, targets)
    return abs(compensated_sum(y - p)) / abs(_target_sum(y))


def relative_systematic_error(predictions, targets) -> float:
    """Mean per-point relative residual, in percent.

    Any target with |y| <= 1e-12 raises :class:`DegenerateDataError`
    naming the offending index.
    """
    p, y = _paired(predictions, targets)
    tiny = np.flatnonzero(np.abs(y) <= 1e-12)
    if tiny.size:
        raise DegenerateDataError(
            f"target at index {int(tiny[0])} is (near) zero; "
            "relative systematic error is undefined"
        )
    return 100.0 * compensated_sum((y - p) / y) / y.size


def evaluate_predictions(predictions, targets) -> EvalReport:
    """All five metrics in one :class:`EvalReport`."""
    p, y = _paired(predictions, targets)
    return EvalReport(
        mse=mse(p, y),
        r2=r_squared(p, y),
        delta_abs=total_error(p, y),
        delta_rel=relative_total_error(p, y),
        rse=relative_systematic_error(p, y),
        n=int(y.size),
    )


def evaluate_model(model, data: Dataset) -> EvalReport:
    return evaluate_predictions(model.predict(data.features), data.targets)


@dataclass(frozen=True)
class AccumulationCurve:
    """Total error as a function of evaluated-set size, averaged over trials.

    ``delta_abs_mean[k]`` is the mean over trials of |sum of residuals of
    the first ``sizes[k]`` points| (points shuffled once per trial);
    ``*_se`` are standard errors of those means (zero for a single trial).
    """

    sizes: np.ndarray
    delta_abs_mean: np.ndarray
    delta_abs_se: np.ndarray
    delta_rel_mean: np.ndarray
    delta_rel_se: np.ndarray
    n_trials: int

    def __post_init__(self):
        sizes = np.array(self.sizes, dtype=np.int64, copy=True)
        if sizes.ndim != 1 or sizes.size == 0:
            raise ConfigError("size grid must be a non-empty 1-D array")
        if np.any(np.diff(sizes) <= 0):
            raise ConfigError("size grid must be strictly increasing")
        if sizes[0] < 1:
            raise ConfigError("size grid must start at 1 or above")
        object.__setattr__(self, "sizes", sizes)
        for name in ("delta_abs_mean", "delta_abs_se",
                     "delta_rel_mean", "delta_rel_se"):
            arr = np.array(getattr(self, name), dtype=np.float64, copy=True)
            if arr.shape != sizes.shape:
                raise ShapeMismatchError(f"{name} must match the size grid")
            object.__setattr__(self, name, arr)
        if int(self.n_trials) < 1:
            raise ConfigError("n_trials must be >= 1")
        object.__setattr__(self, "n_trials", int(self.n_trials))

    def rows(self):
        """(size, delta_mean, delta_se, rel_mean, rel_se) tuples."""
        return [
            (int(s), float(da), float(dse), float(ra), float(rse))
            for s, da, dse, ra, rse in zip(
                self.sizes, self.delta_abs_mean, self.delta_abs_se,
                self.delta_rel_mean, self.delta_rel_se,
            )
        ]


CURVE_CSV_HEADER = "size,delta_mean,delta_se,rel_mean,rel_se"


def write_curve_csv(curve: AccumulationCurve, path) -> None:
    lines = [CURVE_CSV_HEADER]
    for size, da, dse, ra, rse in curve.rows():
        lines.append(f"{size},{da!r},{dse!r},{ra!r},{rse!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def default_size_grid(n: int, n_sizes: int = 20, smallest: int = 50) -> np.ndarray:
    """Log-spaced evaluated-set sizes from min(smallest, n) up to n."""
    if n < 1:
        raise ConfigError("cannot build a size grid for an empty set")
    lo = min(smallest, n)
    grid = np.unique(np.round(np.geomspace(lo, n, n_sizes)).astype(np.int64))
    return grid


def _mean_and_se(values: np.ndarray):
    v = np.asarray(values, dtype=np.float64)
    mean = float(v.mean())
    if v.size == 1:
        return mean, 0.0
    return mean, float(v.std(ddof=1) / np.sqrt(v.size))


def accumulation_curve(per_trial_predictions, per_trial_targets,
                       sizes=None, seed: int = 0) -> AccumulationCurve:
    """How the total error accumulates as more points are evaluated.

    Each trial's points are shuffled once (deterministically from ``seed``
    and the trial index), then the signed residual sum of every prefix on
    the grid is measured; |.| and the ratio to |sum of prefix targets| are
    averaged across trials. At full size the shuffle is irrelevant: the
    compensated sum makes the last grid point exactly the set's total
    error.
    """
    preds = [np.asarray(p, dtype=np.float64).ravel() for p in per_trial_predictions]
    targs = [np.asarray(t, dtype=np.float64).ravel() for t in per_trial_targets]
    if len(preds) != len(targs) or len(preds) == 0:
        raise ConfigError("need the same non-zero number of prediction/target sets")
    for p, t in zip(preds, targs):
        if p.shape != t.shape:
            raise ShapeMismatchError("prediction/target length mismatch in a trial")
        if p.size == 0:
            raise InsufficientDataError("empty trial in accumulation curve")
    n_min = min(p.size for p in preds)
    if sizes is None:
        sizes = default_size_grid(n_min)
    sizes = np.array(sizes, dtype=np.int64)
    if sizes.ndim != 1 or sizes.size == 0 or np.any(np.diff(sizes) <= 0):
        raise ConfigError("size grid must be 1-D and strictly increasing")
    if sizes[0] < 1 or sizes[-1] > n_min:
        raise ConfigError(
            f"size grid must stay within [1, {n_min}], got "
            f"[{int(sizes[0])}, {int(sizes[-1])}]"
        )

    n_trials = len(preds)
    delta_abs = np.empty((n_trials, sizes.size))
    delta_rel = np.empty((n_trials, sizes.size))
    for t, (p, y) in enumerate(zip(preds, targs)):
        order = np.random.default_rng([seed, t]).permutation(p.size)
        resid = (y - p)[order]
        y_perm = y[order]
        for k, size in enumerate(sizes):
            signed = compensated_sum(resid[:size])
            delta_abs[t, k] = abs(signed)
            delta_rel[t, k] = abs(signed) / abs(_target_sum(y_perm[:size]))

    stats = [_mean_and_se(delta_abs[:, k]) for k in range(sizes.size)]
    rel_stats = [_mean_and_se(delta_rel[:, k]) for k in range(sizes.size)]
    return AccumulationCurve(
        sizes=sizes,
        delta_abs_mean=np.array([s[0] for s in stats]),
        delta_abs_se=np.array([s[1] for s in stats]),
        delta_rel_mean=np.array([s[0] for s in rel_stats]),
        delta_rel_se=np.array([s[1] for s in rel_stats]),
        n_trials=n_trials,
    )


@dataclass(frozen=True)
class MetricSummary:
    """Mean and standard error of one metric across trials."""

    mean: float
    se: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "se": self.se}


@dataclass(frozen=True)
class AggregateReport:
    """Across-trial summary of one model variant.

    ``r2_train``/``delta_train`` refer to the model-building set,
    ``r2_test``/``delta_test``/``rel_test`` to the held-out set.
    """

    r2_train: MetricSummary
    r2_test: MetricSummary
    delta_train: MetricSummary
    delta_test: MetricSummary
    rel_test: MetricSummary
    n_trials: int

    def to_dict(self) -> dict:
        return {
            "r2_train": self.r2_train.to_dict(),
            "r2_test": self.r2_test.to_dict(),
            "delta_train": self.delta_train.to_dict(),
            "delta_test": self.delta_test.to_dict(),
            "rel_test": self.rel_test.to_dict(),
            "n_trials": self.n_trials,
        }


def aggregate_trials(report_pairs) -> AggregateReport:
    """Aggregate per-trial (train_report, test_report) pairs.

    Standard errors use the n-1 sample standard deviation over sqrt(n);
    a single trial gets SE certainty of exactly zero.
    """
    pairs = list(report_pairs)
    if not pairs:
        raise InsufficientDataError("no trials to aggregate")

    def summarize(values):
        return MetricSummary(*_mean_and_se(np.array(values, dtype=np.float64)))

    return AggregateReport(
        r2_train=summarize([tr.r2 for tr, _ in pairs]),
        r2_test=summarize([te.r2 for _, te in pairs]),
        delta_train=summarize([tr.delta_abs for tr, _ in pairs]),
        delta_test=summarize([te.delta_abs for _, te in pairs]),
        rel_test=summarize([te.delta_rel for _, te in pairs]),
        n_trials=len(pairs),
    )
