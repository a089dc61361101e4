"""Command-line interface.

``biascorr experiment --config cfg.json`` reproduces a full multi-trial
study; ``fit``, ``calibrate``, ``evaluate``, ``curve`` and ``synth``
expose the individual pipeline stages on ad-hoc CSV files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .calibration import calibrate_on
from .core import Dataset
from .data import (
    CsvSchema,
    SynthSpec,
    generate_synthetic,
    load_csv,
    write_dataset_cache,
)
from .errors import ConfigError
from .experiment import ExperimentConfig, format_table, run_experiment
from .metrics import accumulation_curve, evaluate_model, write_curve_csv
from .models import fit_linear, fit_mean, load_model, save_model
from .training import TrainConfig, train_mlp

log = logging.getLogger("biascorr.cli")


def _add_schema_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", required=True, nargs="+", metavar="CSV",
                        help="input CSV file(s), concatenated in order")
    parser.add_argument("--target", required=True, help="target column name")
    parser.add_argument("--features", default=None,
                        help="comma-separated feature columns "
                             "(default: every non-target column)")
    parser.add_argument("--delimiter", default=",")
    parser.add_argument("--no-header", action="store_true",
                        help="columns are addressed as c0, c1, ...")


def _load_from_args(args) -> Dataset:
    first = Path(args.data[0])
    if args.features:
        feature_cols = tuple(c.strip() for c in args.features.split(","))
    else:
        if args.no_header:
            head = pd.read_csv(first, sep=args.delimiter, header=None, nrows=1)
            columns = [f"c{i}" for i in range(head.shape[1])]
        else:
            columns = list(pd.read_csv(first, sep=args.delimiter, nrows=0).columns)
        feature_cols = tuple(c for c in columns if c != args.target)
    schema = CsvSchema(
        feature_columns=feature_cols,
        target_column=args.target,
        delimiter=args.delimiter,
        has_header=not args.no_header,
    )
    return load_csv(args.data, schema)


def _cmd_experiment(args) -> int:
    config = ExperimentConfig.load(args.config)
    if args.seed is not None:
        import dataclasses
        config = dataclasses.replace(config, base_seed=args.seed)
    if args.trials is not None:
        import dataclasses
        config = dataclasses.replace(config, n_trials=args.trials)
    result = run_experiment(config, out_dir=args.out, jobs=args.jobs)
    if args.rounded:
        print(format_table(result.table))
    else:
        print(json.dumps({k: v.to_dict() for k, v in result.table.items()},
                         indent=2, sort_keys=True))
    if result.out_dir:
        log.info("outputs in %s", result.out_dir)
    return 0


def _cmd_fit(args) -> int:
    data = _load_from_args(args)
    if args.model == "linear":
        model = fit_linear(data)
    elif args.model == "mean":
        model = fit_mean(data)
    else:
        n_val = max(2, int(round(args.val_fraction * data.n_points)))
        if data.n_points - n_val < 2:
            raise ConfigError(
                f"{data.n_points} rows leave no room for a validation part"
            )
        order = np.random.default_rng(args.seed).permutation(data.n_points)
        val = data.subset(order[:n_val])
        train = data.subset(order[n_val:])
        config = TrainConfig(
            epochs=args.epochs,
            learning_rate=args.learning_rate,
            batch_size=args.batch_size,
            seed=args.seed,
        )
        model, tlog = train_mlp(train, val, config)
        log.info("selected epoch %d (val MSE %.6g)",
                 tlog.best_epoch, tlog.val_mse[tlog.best_epoch])
    save_model(model, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_calibrate(args) -> int:
    model = load_model(args.model)
    data = _load_from_args(args)
    tag = args.tag if args.tag is not None else Path(args.data[0]).stem
    corrected, correction = calibrate_on(model, data, source_tag=tag)
    save_model(corrected, args.out)
    print(json.dumps(correction.to_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_evaluate(args) -> int:
    model = load_model(args.model)
    data = _load_from_args(args)
    report = evaluate_model(model, data)
    doc = report.to_dict()
    if args.rounded:
        print(f"mse       {doc['mse']:.3f}")
        print(f"r2        {doc['r2']:.2f}")
        print(f"delta_abs {doc['delta_abs']:.2f}")
        print(f"delta_rel {100.0 * doc['delta_rel']:.2f}%")
        print(f"rse       {doc['rse']:.2f}%")
        print(f"n         {doc['n']}")
    else:
        print(json.dumps(doc, indent=2, sort_keys=True))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def _cmd_curve(args) -> int:
    model = load_model(args.model)
    data = _load_from_args(args)
    sizes = None
    if args.sizes:
        sizes = [int(s) for s in args.sizes.split(",")]
    predictions = model.predict(data.features)
    curve = accumulation_curve([predictions], [data.targets],
                               sizes=sizes, seed=args.seed)
    write_curve_csv(curve, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_synth(args) -> int:
    spec = SynthSpec(
        n_points=args.n_points,
        n_features=args.n_features,
        generator=args.generator,
        noise_sigma=args.noise_sigma,
        target_offset=args.target_offset,
        seed=args.seed,
    )
    data = generate_synthetic(spec)
    sidecar = write_dataset_cache(data, args.out)
    print(json.dumps({"spec": spec.to_dict(), **sidecar}, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biascorr",
        description="Post-hoc output-bias correction for regression models.",
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("experiment", help="run a multi-trial study from a config")
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    p.add_argument("--seed", type=int, default=None, help="override base seed")
    p.add_argument("--trials", type=int, default=None, help="override trial count")
    p.add_argument("--jobs", type=int, default=1,
                   help="run up to N trials in parallel processes")
    p.add_argument("--rounded", action="store_true",
                   help="print a rounded presentation table (errors in percent) "
                        "instead of full-precision JSON")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("fit", help="fit one model on a CSV file")
    p.add_argument("--model", required=True, choices=("linear", "mlp", "mean"))
    _add_schema_args(p)
    p.add_argument("--out", required=True, help="where to write the model JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--learning-rate", type=float, default=1e-2)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--val-fraction", type=float, default=0.2,
                   help="share of rows held out for epoch selection (mlp only)")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("calibrate",
                       help="shift a model's output bias to zero a dataset's residual sum")
    p.add_argument("--model", required=True, help="model JSON to correct")
    _add_schema_args(p)
    p.add_argument("--out", required=True, help="where to write the corrected model")
    p.add_argument("--tag", default=None,
                   help="label recorded with the correction (default: data file stem)")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("evaluate", help="metrics of a model on a CSV file")
    p.add_argument("--model", required=True)
    _add_schema_args(p)
    p.add_argument("--out", default=None, help="also write the report as JSON")
    p.add_argument("--rounded", action="store_true",
                   help="rounded presentation, relative errors in percent")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("curve", help="error-accumulation curve of a model on a CSV file")
    p.add_argument("--model", required=True)
    _add_schema_args(p)
    p.add_argument("--sizes", default=None,
                   help="comma-separated prefix sizes (default: log grid)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="where to write the curve CSV")
    p.set_defaults(func=_cmd_curve)

    p = sub.add_parser("synth", help="generate a synthetic dataset CSV (+ sidecar)")
    p.add_argument("--n-points", type=int, required=True)
    p.add_argument("--n-features", type=int, required=True)
    p.add_argument("--generator", default="linear",
                   choices=("linear", "sigmoid-mixture", "piecewise"))
    p.add_argument("--noise-sigma", type=float, default=0.1)
    p.add_argument("--target-offset", type=float, default=0.0,
                   help="constant added to every target (emulates a shifted "
                        "deployment distribution)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="where to write the CSV")
    p.set_defaults(func=_cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except Exception as exc:  # CLI boundary: report, don't traceback
        log.error("%s: %s", type(exc).__name__, exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
