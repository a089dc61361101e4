"""Regression models sharing one contract: predictions end in a scalar
output bias that can be shifted without touching any other parameter.

Three kinds:

* :class:`LinearModel` — ordinary least squares, float64 weights.
* :class:`MlpModel` — a fixed 16/8 two-hidden-layer sigmoid network with a
  direct input-to-output shortcut; float32 weights, float64 output bias.
* :class:`MeanModel` — predicts a constant (its bias *is* the mean).
"""

from __future__ import annotations

import base64
import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.linalg.lapack import dpstrf

from .core import Dataset, compensated_mean
from .data import Standardizer
from .errors import (
    DataError,
    InsufficientDataError,
    NonFiniteError,
    ShapeMismatchError,
    SingularMatrixError,
)

__all__ = [
    "HIDDEN_WIDTHS",
    "LinearModel",
    "MlpModel",
    "MeanModel",
    "fit_linear",
    "fit_mean",
    "init_mlp",
    "predict",
    "mlp_raw_outputs",
    "model_to_json",
    "model_from_json",
    "save_model",
    "load_model",
]

HIDDEN_WIDTHS = (16, 8)

MODEL_FORMAT = "biascorr-model"
MODEL_VERSION = 1


def _as_batch(features, n_features: int):
    """Validate a feature vector/matrix and return (2-D float64 array, was_single)."""
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != n_features:
        raise ShapeMismatchError(
            f"expected {n_features} feature columns, got array of shape "
            f"{np.asarray(features).shape}"
        )
    if not np.isfinite(x).all():
        raise NonFiniteError("non-finite value in prediction input")
    return x, single


@dataclass(frozen=True)
class LinearModel:
    """y = weights . x + bias, everything float64, no hidden transforms."""

    weights: np.ndarray
    bias: float

    def __post_init__(self):
        given = self.weights
        if (isinstance(given, np.ndarray) and given.dtype == np.float64
                and given.ndim == 1 and not given.flags.writeable):
            w = given
        else:
            w = np.array(given, dtype=np.float64, copy=True).ravel()
        if w.size < 1:
            raise ShapeMismatchError("linear model needs at least one weight")
        if not np.isfinite(w).all() or not math.isfinite(float(self.bias)):
            raise NonFiniteError("linear model parameters must be finite")
        if w.flags.writeable:
            w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def n_features(self) -> int:
        return self.weights.size

    def predict(self, features):
        x, single = _as_batch(features, self.n_features)
        out = x @ self.weights + self.bias
        return float(out[0]) if single else out

    def with_bias(self, new_bias: float) -> "LinearModel":
        return dataclasses.replace(self, bias=float(new_bias))


@dataclass(frozen=True)
class MeanModel:
    """Constant predictor; calibrating it shifts the constant."""

    mean: float

    def __post_init__(self):
        if not math.isfinite(float(self.mean)):
            raise NonFiniteError("mean must be finite")
        object.__setattr__(self, "mean", float(self.mean))

    @property
    def bias(self) -> float:
        return self.mean

    def predict(self, features):
        x = np.asarray(features, dtype=np.float64)
        if x.ndim == 1:
            return self.mean
        return np.full(x.shape[0], self.mean, dtype=np.float64)

    def with_bias(self, new_bias: float) -> "MeanModel":
        return dataclasses.replace(self, mean=float(new_bias))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Overflow-free logistic in the array's own dtype.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def mlp_raw_outputs(w1, b1, w2, b2, out_hidden, out_shortcut, x,
                    return_hidden: bool = False):
    """Pre-bias network output for already-standardized inputs.

    All arithmetic happens in ``x.dtype``; parameters are cast to it. This
    is the single forward implementation shared by prediction, training
    and the 64-bit gradient-verification path.
    """
    dt = x.dtype
    w1, b1, w2, b2 = (np.asarray(a, dtype=dt) for a in (w1, b1, w2, b2))
    out_hidden = np.asarray(out_hidden, dtype=dt)
    out_shortcut = np.asarray(out_shortcut, dtype=dt)
    h1 = _sigmoid(x @ w1 + b1)
    h2 = _sigmoid(h1 @ w2 + b2)
    raw = h2 @ out_hidden + x @ out_shortcut
    if return_hidden:
        return raw, h1, h2
    return raw


@dataclass(frozen=True)
class MlpModel:
    """Two sigmoid hidden layers (16 then 8 units) plus a linear shortcut
    from the inputs straight to the output.

    Weights are float32; the scalar output ``bias`` is kept in float64 so
    calibration shifts are not quantized. If ``standardizer`` is set (as it
    is for trained models) inputs are standardized inside ``predict``.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    out_hidden: np.ndarray
    out_shortcut: np.ndarray
    bias: float
    standardizer: Standardizer | None = None

    def __post_init__(self):
        h1, h2 = HIDDEN_WIDTHS
        f = np.asarray(self.w1).shape[0] if np.asarray(self.w1).ndim == 2 else 0
        expected = {
            "w1": (f, h1), "b1": (h1,), "w2": (h1, h2), "b2": (h2,),
            "out_hidden": (h2,), "out_shortcut": (f,),
        }
        if f < 1:
            raise ShapeMismatchError("w1 must be a (n_features, 16) matrix")
        for name, shape in expected.items():
            given = getattr(self, name)
            # already-canonical arrays (frozen float32 of the right shape)
            # are shared, so bias shifts don't copy the whole network
            if (isinstance(given, np.ndarray) and given.dtype == np.float32
                    and given.shape == shape and not given.flags.writeable):
                arr = given
            else:
                arr = np.array(given, dtype=np.float32, copy=True)
            if arr.shape != shape:
                raise ShapeMismatchError(
                    f"{name} must have shape {shape}, got {arr.shape}"
                )
            if not np.isfinite(arr).all():
                raise NonFiniteError(f"non-finite value in {name}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not math.isfinite(float(self.bias)):
            raise NonFiniteError("output bias must be finite")
        object.__setattr__(self, "bias", float(self.bias))
        if self.standardizer is not None and self.standardizer.n_features != f:
            raise ShapeMismatchError(
                f"standardizer covers {self.standardizer.n_features} features, "
                f"model expects {f}"
            )

    @property
    def n_features(self) -> int:
        return self.w1.shape[0]

    def predict(self, features):
        x, single = _as_batch(features, self.n_features)
        if self.standardizer is not None:
            x = (x - self.standardizer.mean) / self.standardizer.std
        raw = mlp_raw_outputs(
            self.w1, self.b1, self.w2, self.b2,
            self.out_hidden, self.out_shortcut, x.astype(np.float32),
        )
        out = raw.astype(np.float64) + self.bias
        return float(out[0]) if single else out

    def with_bias(self, new_bias: float) -> "MlpModel":
        return dataclasses.replace(self, bias=float(new_bias))


def predict(model, features):
    """Evaluate any model kind on a feature vector (-> float) or matrix (-> array)."""
    return model.predict(features)


def init_mlp(n_features: int, seed: int) -> MlpModel:
    """Fresh network: Glorot-uniform weights, zero biases, no standardizer."""
    if int(n_features) < 1:
        raise ShapeMismatchError("n_features must be >= 1")
    f = int(n_features)
    h1, h2 = HIDDEN_WIDTHS
    rng = np.random.default_rng(seed)

    def glorot(fan_in, fan_out, shape):
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, shape).astype(np.float32)

    return MlpModel(
        w1=glorot(f, h1, (f, h1)),
        b1=np.zeros(h1, dtype=np.float32),
        w2=glorot(h1, h2, (h1, h2)),
        b2=np.zeros(h2, dtype=np.float32),
        out_hidden=glorot(h2, 1, (h2,)),
        out_shortcut=glorot(f, 1, (f,)),
        bias=0.0,
        standardizer=None,
    )


def fit_mean(data: Dataset) -> MeanModel:
    """Constant model at the compensated mean of the targets."""
    return MeanModel(mean=compensated_mean(data.targets))


def fit_linear(data: Dataset) -> LinearModel:
    """Ordinary least squares with intercept, solved via the normal
    equations of the centered, column-scaled design.

    Rank deficiency (constant columns, exact collinearity) raises
    :class:`SingularMatrixError` naming the dependent columns; the
    threshold is 1e-10 relative to the largest pivot. The fitted intercept
    makes the training residuals sum to zero up to rounding.
    """
    x = data.features.astype(np.float64)
    y = data.targets
    n, f = x.shape
    if n <= f:
        raise InsufficientDataError(
            f"need more rows ({n}) than features ({f}) to fit an intercept model"
        )

    y_mean = compensated_mean(y)
    x_mean = x.mean(axis=0)
    xc = x - x_mean
    yc = y - y_mean

    norms = np.sqrt(np.einsum("ij,ij->j", xc, xc))
    raw_norms = np.sqrt(np.einsum("ij,ij->j", x, x))
    constant = norms <= 1e-10 * np.maximum(raw_norms, 1.0)
    if constant.any():
        cols = [data.feature_names[i] for i in np.flatnonzero(constant)]
        raise SingularMatrixError(
            f"column(s) {cols} are constant and collinear with the intercept",
            columns=cols,
        )

    z = xc / norms
    gram = z.T @ z
    rhs = z.T @ yc

    # Pivoted Cholesky reveals the numerical rank; pivots below
    # 1e-10 x (largest pivot) flag the dependent columns.
    tol = 1e-10 * float(np.max(np.diag(gram)))
    _, piv, rank, info = dpstrf(gram, tol=tol, lower=0)
    if info < 0:  # pragma: no cover - argument error
        raise DataError(f"pivoted Cholesky failed with info={info}")
    if rank < f:
        cols = [data.feature_names[int(p) - 1] for p in piv[rank:]]
        raise SingularMatrixError(
            f"design matrix is rank deficient (rank {int(rank)} of {f}); "
            f"dependent column(s): {cols}",
            columns=cols,
        )

    w_scaled = cho_solve(cho_factor(gram, lower=False), rhs)
    weights = w_scaled / norms
    bias = y_mean - float(weights @ x_mean)
    return LinearModel(weights=weights, bias=bias)


def _encode_f32(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f4").tobytes()).decode("ascii")


def _decode_f32(text: str, shape) -> np.ndarray:
    raw = base64.b64decode(text.encode("ascii"))
    arr = np.frombuffer(raw, dtype="<f4")
    expected = int(np.prod(shape))
    if arr.size != expected:
        raise DataError(
            f"encoded array holds {arr.size} values, expected {expected}"
        )
    return arr.reshape(shape).copy()


def model_to_json(model) -> dict:
    """JSON-safe dict for any model kind; round-trips bit-exactly.

    float32 weight arrays are base64-encoded little-endian bytes; float64
    scalars (and linear weights) are decimal strings with full precision.
    """
    head = {"format": MODEL_FORMAT, "version": MODEL_VERSION}
    if isinstance(model, LinearModel):
        return {
            **head,
            "kind": "linear",
            "weights": [repr(float(w)) for w in model.weights],
            "bias": repr(model.bias),
        }
    if isinstance(model, MeanModel):
        return {**head, "kind": "mean", "mean": repr(model.mean)}
    if isinstance(model, MlpModel):
        std = model.standardizer.to_dict() if model.standardizer else None
        return {
            **head,
            "kind": "mlp",
            "n_features": model.n_features,
            "hidden_widths": list(HIDDEN_WIDTHS),
            "weights": {
                "w1": _encode_f32(model.w1),
                "b1": _encode_f32(model.b1),
                "w2": _encode_f32(model.w2),
                "b2": _encode_f32(model.b2),
                "out_hidden": _encode_f32(model.out_hidden),
                "out_shortcut": _encode_f32(model.out_shortcut),
            },
            "bias": repr(model.bias),
            "standardizer": std,
        }
    raise TypeError(f"not a serializable model: {type(model).__name__}")


def model_from_json(doc: dict):
    if doc.get("format") != MODEL_FORMAT:
        raise DataError("not a model document (bad or missing format field)")
    kind = doc.get("kind")
    if kind == "linear":
        return LinearModel(
            weights=np.array([float(w) for w in doc["weights"]], dtype=np.float64),
            bias=float(doc["bias"]),
        )
    if kind == "mean":
        return MeanModel(mean=float(doc["mean"]))
    if kind == "mlp":
        if tuple(doc.get("hidden_widths", HIDDEN_WIDTHS)) != HIDDEN_WIDTHS:
            raise DataError(
                f"unsupported hidden widths {doc.get('hidden_widths')}"
            )
        f = int(doc["n_features"])
        h1, h2 = HIDDEN_WIDTHS
        w = doc["weights"]
        std = doc.get("standardizer")
        return MlpModel(
            w1=_decode_f32(w["w1"], (f, h1)),
            b1=_decode_f32(w["b1"], (h1,)),
            w2=_decode_f32(w["w2"], (h1, h2)),
            b2=_decode_f32(w["b2"], (h2,)),
            out_hidden=_decode_f32(w["out_hidden"], (h2,)),
            out_shortcut=_decode_f32(w["out_shortcut"], (f,)),
            bias=float(doc["bias"]),
            standardizer=Standardizer.from_dict(std) if std else None,
        )
    raise DataError(f"unknown model kind {kind!r}")


def save_model(model, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_json(json.load(fh))
