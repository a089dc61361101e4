"""Post-hoc output-bias correction.

A least-squares model that is optimal on its training data has residuals
summing to zero there, but a shifted deployment distribution (or an
under-trained network) leaves a systematic offset. The fix is cheap and
architecture-agnostic: add the mean residual of a calibration set to the
model's output bias. After the shift the calibration residuals sum to
zero and the calibration MSE drops by exactly (mean residual)^2.
"""

from __future__ import annotations

import numpy as np

from .core import BiasCorrection, Dataset, compensated_sum
from .errors import InsufficientDataError, NonFiniteError, ShapeMismatchError

__all__ = ["compute_delta_b", "apply_correction", "calibrate_on"]


def compute_delta_b(predictions, targets, source_tag: str = "") -> BiasCorrection:
    """Mean residual (targets - predictions) as a :class:`BiasCorrection`.

    The sum is compensated, so the result does not depend on input order.
    """
    p = np.asarray(predictions, dtype=np.float64).ravel()
    y = np.asarray(targets, dtype=np.float64).ravel()
    if p.shape != y.shape:
        raise ShapeMismatchError(
            f"{p.size} predictions but {y.size} targets"
        )
    if p.size == 0:
        raise InsufficientDataError("calibration needs at least one point")
    if not np.isfinite(p).all():
        raise NonFiniteError("non-finite prediction in calibration input")
    # targets re-checked here because raw arrays may come from outside Dataset
    if not np.isfinite(y).all():
        raise NonFiniteError("non-finite target in calibration input")
    delta = compensated_sum(y - p) / p.size
    return BiasCorrection(delta_b=delta, n_calibration=p.size, source_tag=source_tag)


def apply_correction(model, correction: BiasCorrection):
    """Return ``model`` with its output bias shifted by ``correction.delta_b``.

    Works on anything exposing ``bias`` and ``with_bias``; every other
    parameter is carried over untouched. A zero correction returns the
    model object itself, so "no shift" is bit-for-bit a no-op.
    """
    if not (hasattr(model, "bias") and hasattr(model, "with_bias")):
        raise TypeError(
            f"{type(model).__name__} does not expose a scalar output bias"
        )
    if correction.delta_b == 0.0:
        return model
    return model.with_bias(model.bias + correction.delta_b)


def calibrate_on(model, data: Dataset, source_tag: str = ""):
    """Compute the correction of ``model`` on ``data`` and apply it.

    Returns ``(corrected_model, correction)``. The corrected model's
    residuals on ``data`` sum to zero up to rounding.
    """
    predictions = model.predict(data.features)
    correction = compute_delta_b(predictions, data.targets, source_tag=source_tag)
    return apply_correction(model, correction), correction
