"""Shared generators for seeded-random property loops."""

import numpy as np

import biascorr as bc

MODEL_KINDS = ("linear", "mlp", "mean")


def random_dataset(rng, n=None, f=None):
    """Linear-ish data with an intercept well away from zero, so relative
    errors stay well-defined."""
    n = int(n if n is not None else rng.integers(20, 200))
    f = int(f if f is not None else rng.integers(1, 6))
    x = rng.standard_normal((n, f)) * rng.uniform(0.5, 2.0)
    w = rng.uniform(-2.0, 2.0, f)
    intercept = rng.uniform(3.0, 10.0)
    y = x @ w + intercept + rng.normal(0.0, 0.5, n)
    return bc.Dataset(x, y)


def random_model(rng, kind, n_features):
    if kind == "linear":
        return bc.LinearModel(
            weights=rng.uniform(-2.0, 2.0, n_features),
            bias=float(rng.uniform(-3.0, 3.0)),
        )
    if kind == "mean":
        return bc.MeanModel(mean=float(rng.uniform(-3.0, 8.0)))
    model = bc.init_mlp(n_features, seed=int(rng.integers(0, 2**32)))
    return model.with_bias(float(rng.uniform(-2.0, 2.0)))


def model_dataset_pairs(seed, count):
    """Yield (kind, model, dataset) cycling through all model kinds."""
    rng = np.random.default_rng(seed)
    for i in range(count):
        kind = MODEL_KINDS[i % len(MODEL_KINDS)]
        ds = random_dataset(rng)
        yield kind, random_model(rng, kind, ds.n_features), ds
