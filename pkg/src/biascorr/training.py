"""Mini-batch training for the MLP: manual backprop + Adam.

Forward/backward run in float32 (matching the stored weights); the scalar
output bias and its gradient stay float64. A float64 mode of
:func:`gradient` exists for verification against finite differences at
tight tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset
from .data import apply_standardizer, fit_standardizer
from .errors import (
    ConfigError,
    InsufficientDataError,
    NonFiniteError,
    ShapeMismatchError,
    TrainingDivergedError,
)
from .models import MlpModel, init_mlp, mlp_raw_outputs

__all__ = ["TrainConfig", "TrainingLog", "train_mlp", "gradient"]

_ARRAY_PARAMS = ("w1", "b1", "w2", "b2", "out_hidden", "out_shortcut")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    learning_rate: float = 1e-2
    batch_size: int = 64
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if int(self.epochs) < 1:
            raise ConfigError("epochs must be >= 1")
        if int(self.batch_size) < 1:
            raise ConfigError("batch_size must be >= 1")
        if not (float(self.learning_rate) > 0):
            raise ConfigError("learning_rate must be > 0")
        for name in ("adam_beta1", "adam_beta2"):
            b = float(getattr(self, name))
            if not (0.0 <= b < 1.0):
                raise ConfigError(f"{name} must be in [0, 1)")
        if not (float(self.adam_epsilon) > 0):
            raise ConfigError("adam_epsilon must be > 0")
        object.__setattr__(self, "epochs", int(self.epochs))
        object.__setattr__(self, "batch_size", int(self.batch_size))
        object.__setattr__(self, "seed", int(self.seed))

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_epsilon": self.adam_epsilon,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class TrainingLog:
    """Per-epoch full-pass MSEs and the index of the selected epoch."""

    train_mse: np.ndarray
    val_mse: np.ndarray
    best_epoch: int

    @property
    def n_epochs(self) -> int:
        return len(self.val_mse)

    def to_dict(self) -> dict:
        return {
            "train_mse": [float(v) for v in self.train_mse],
            "val_mse": [float(v) for v in self.val_mse],
            "best_epoch": int(self.best_epoch),
        }


def _grads(params: dict, x: np.ndarray, y: np.ndarray, dtype) -> dict:
    """Gradient of mean squared error over the batch w.r.t. every parameter.

    ``x`` must already be standardized and in ``dtype``; the bias gradient
    is computed in float64 regardless (it equals -2 * mean residual).
    """
    raw, h1, h2 = mlp_raw_outputs(
        params["w1"], params["b1"], params["w2"], params["b2"],
        params["out_hidden"], params["out_shortcut"], x, return_hidden=True,
    )
    out = raw.astype(np.float64) + float(params["bias"])
    resid = y - out
    n = x.shape[0]
    d_raw64 = (-2.0 / n) * resid
    d_raw = d_raw64.astype(dtype)

    g = {"bias": float(np.sum(d_raw64))}
    g["out_hidden"] = h2.T @ d_raw
    g["out_shortcut"] = x.T @ d_raw
    oh = np.asarray(params["out_hidden"], dtype=dtype)
    w2 = np.asarray(params["w2"], dtype=dtype)
    d_h2 = d_raw[:, None] * oh[None, :]
    d_z2 = d_h2 * h2 * (1 - h2)
    g["w2"] = h1.T @ d_z2
    g["b2"] = d_z2.sum(axis=0)
    d_h1 = d_z2 @ w2.T
    d_z1 = d_h1 * h1 * (1 - h1)
    g["w1"] = x.T @ d_z1
    g["b1"] = d_z1.sum(axis=0)
    return g


def gradient(model: MlpModel, features, targets, dtype=np.float32) -> dict:
    """MSE gradient of ``model`` on a batch, keyed by parameter name.

    ``dtype=np.float64`` switches the whole computation (standardization,
    forward, backward) to 64-bit for verification purposes; parameters are
    cast once at entry.
    """
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ConfigError("dtype must be float32 or float64")
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    y = np.asarray(targets, dtype=np.float64).ravel()
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise ShapeMismatchError(
            f"expected {model.n_features} feature columns, got shape {x.shape}"
        )
    if x.shape[0] != y.shape[0]:
        raise ShapeMismatchError(
            f"{x.shape[0]} feature rows but {y.shape[0]} targets"
        )
    if x.shape[0] < 1:
        raise InsufficientDataError("gradient needs a non-empty batch")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise NonFiniteError("non-finite value in gradient batch")

    if model.standardizer is not None:
        x = (x - model.standardizer.mean) / model.standardizer.std
    params = {name: np.asarray(getattr(model, name), dtype=dtype)
              for name in _ARRAY_PARAMS}
    params["bias"] = np.float64(model.bias)
    return _grads(params, x.astype(dtype), y, dtype)


def _full_mse(params: dict, x32: np.ndarray, y: np.ndarray) -> float:
    raw = mlp_raw_outputs(
        params["w1"], params["b1"], params["w2"], params["b2"],
        params["out_hidden"], params["out_shortcut"], x32,
    )
    resid = y - (raw.astype(np.float64) + float(params["bias"]))
    return float(np.mean(resid * resid))


def _adam_step(params, moment1, moment2, grads, config, step):
    lr = float(config.learning_rate)
    b1, b2 = float(config.adam_beta1), float(config.adam_beta2)
    eps = float(config.adam_epsilon)
    corr1 = 1.0 - b1 ** step
    corr2 = 1.0 - b2 ** step
    for name in params:
        g = np.asarray(grads[name], dtype=params[name].dtype)
        moment1[name] = b1 * moment1[name] + (1.0 - b1) * g
        moment2[name] = b2 * moment2[name] + (1.0 - b2) * (g * g)
        m_hat = moment1[name] / corr1
        v_hat = moment2[name] / corr2
        params[name] = params[name] - lr * m_hat / (np.sqrt(v_hat) + eps)


def train_mlp(train: Dataset, val: Dataset, config: TrainConfig) -> tuple:
    """Train the 16/8 network and return ``(model, log)``.

    Features are standardized with statistics of ``train`` (stored in the
    returned model); targets are untouched. Each epoch reshuffles the
    training rows (the last short batch is kept), then full-pass train and
    validation MSEs are logged. The returned model is the epoch with the
    lowest validation MSE (earliest on ties). Identical inputs produce a
    bit-for-bit identical model.

    Raises :class:`TrainingDivergedError` (with the epoch index) if either
    logged MSE goes non-finite.
    """
    if train.n_features != val.n_features:
        raise ShapeMismatchError(
            f"train has {train.n_features} features, val has {val.n_features}"
        )
    stats = fit_standardizer(train)
    x_train = apply_standardizer(stats, train.features)
    x_val = apply_standardizer(stats, val.features)
    y_train, y_val = train.targets, val.targets

    seed_model = init_mlp(train.n_features, config.seed)
    params = {name: np.array(getattr(seed_model, name), dtype=np.float32)
              for name in _ARRAY_PARAMS}
    params["bias"] = np.zeros((), dtype=np.float64)
    moment1 = {k: np.zeros_like(v) for k, v in params.items()}
    moment2 = {k: np.zeros_like(v) for k, v in params.items()}

    shuffle_rng = np.random.default_rng([config.seed, 1])
    n = train.n_points
    bs = config.batch_size
    step = 0
    best_val = np.inf
    best_params = None
    best_epoch = -1
    train_hist = np.empty(config.epochs)
    val_hist = np.empty(config.epochs)

    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        # overflow here is the signature of divergence, which the loss
        # check below turns into an exception; don't warn about it too
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n, bs):
                idx = order[start:start + bs]
                grads = _grads(params, x_train[idx], y_train[idx], np.float32)
                step += 1
                _adam_step(params, moment1, moment2, grads, config, step)
            train_hist[epoch] = _full_mse(params, x_train, y_train)
            val_hist[epoch] = _full_mse(params, x_val, y_val)
        if not (np.isfinite(train_hist[epoch]) and np.isfinite(val_hist[epoch])):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch}", epoch=epoch
            )
        if val_hist[epoch] < best_val:
            best_val = float(val_hist[epoch])
            best_params = {k: v.copy() for k, v in params.items()}
            best_epoch = epoch

    model = MlpModel(
        w1=best_params["w1"], b1=best_params["b1"],
        w2=best_params["w2"], b2=best_params["b2"],
        out_hidden=best_params["out_hidden"],
        out_shortcut=best_params["out_shortcut"],
        bias=float(best_params["bias"]),
        standardizer=stats,
    )
    log = TrainingLog(train_mse=train_hist, val_mse=val_hist, best_epoch=best_epoch)
    return model, log
