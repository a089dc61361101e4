"""Multi-trial experiment harness.

One experiment = one dataset, T trials. Each trial re-splits the data
with seed ``base_seed + trial``, fits the configured models, calibrates
their output bias on the configured source split, and evaluates both
variants on the model-building (dev = train+val) and test sets. Results
aggregate into a metrics table and error-accumulation curves, and every
artifact needed to recompute any reported number is persisted.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import calibrate_on
from .core import Dataset, SplitIndices, compensated_sum
from .data import (
    CsvSchema,
    SplitSpec,
    SynthSpec,
    generate_synthetic,
    load_csv,
    make_split,
)
from .errors import ConfigError
from .metrics import (
    AccumulationCurve,
    accumulation_curve,
    aggregate_trials,
    default_size_grid,
    evaluate_predictions,
    CURVE_CSV_HEADER,
)
from .models import fit_linear, fit_mean, load_model, save_model
from .training import TrainConfig, train_mlp

__all__ = [
    "DataSource",
    "ExperimentConfig",
    "TrialResult",
    "ExperimentResult",
    "run_experiment",
    "format_table",
    "recompute_table_entry",
]

log = logging.getLogger("biascorr.experiment")

MODEL_KINDS = ("linear", "mlp", "mean")
CALIBRATION_SOURCES = ("train", "val", "train+val")


@dataclass(frozen=True)
class DataSource:
    """Where the experiment's dataset comes from: CSV files or a generator."""

    kind: str
    paths: tuple = ()
    schema: CsvSchema | None = None
    expected_rows: int | None = None
    synth: SynthSpec | None = None

    def __post_init__(self):
        if self.kind == "csv":
            if not self.paths or self.schema is None:
                raise ConfigError("csv data source needs paths and a schema")
            object.__setattr__(self, "paths", tuple(str(p) for p in self.paths))
        elif self.kind == "synthetic":
            if self.synth is None:
                raise ConfigError("synthetic data source needs a synth spec")
        else:
            raise ConfigError(f"unknown data source kind {self.kind!r}")

    def load(self) -> Dataset:
        if self.kind == "csv":
            return load_csv(list(self.paths), self.schema, self.expected_rows)
        return generate_synthetic(self.synth)

    def to_dict(self) -> dict:
        if self.kind == "csv":
            return {
                "kind": "csv",
                "paths": list(self.paths),
                "schema": self.schema.to_dict(),
                "expected_rows": self.expected_rows,
            }
        return {"kind": "synthetic", "spec": self.synth.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "DataSource":
        if d.get("kind") == "csv":
            return cls(
                kind="csv",
                paths=tuple(d["paths"]),
                schema=CsvSchema.from_dict(d["schema"]),
                expected_rows=d.get("expected_rows"),
            )
        if d.get("kind") == "synthetic":
            return cls(kind="synthetic", synth=SynthSpec.from_dict(d["spec"]))
        raise ConfigError(f"unknown data source kind {d.get('kind')!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataSource
    split: SplitSpec
    models: tuple = MODEL_KINDS
    training: TrainConfig = TrainConfig()
    n_trials: int = 10
    base_seed: int = 0
    calibration_source: str = "train+val"
    curve_sizes: tuple | None = None
    out_dir: str | None = None

    def __post_init__(self):
        models = tuple(self.models)
        if not models or len(set(models)) != len(models):
            raise ConfigError("models must be a non-empty list without duplicates")
        for kind in models:
            if kind not in MODEL_KINDS:
                raise ConfigError(
                    f"unknown model kind {kind!r}; choose from {MODEL_KINDS}"
                )
        object.__setattr__(self, "models", models)
        if not isinstance(self.split, SplitSpec):
            object.__setattr__(self, "split", SplitSpec(*self.split))
        if int(self.n_trials) < 1:
            raise ConfigError("n_trials must be >= 1")
        object.__setattr__(self, "n_trials", int(self.n_trials))
        object.__setattr__(self, "base_seed", int(self.base_seed))
        if self.calibration_source not in CALIBRATION_SOURCES:
            raise ConfigError(
                f"calibration_source must be one of {CALIBRATION_SOURCES}"
            )
        if self.curve_sizes is not None:
            sizes = tuple(int(s) for s in self.curve_sizes)
            if not sizes or any(b <= a for a, b in zip(sizes, sizes[1:])):
                raise ConfigError("curve_sizes must be strictly increasing")
            object.__setattr__(self, "curve_sizes", sizes)

    def to_dict(self) -> dict:
        return {
            "data": self.data.to_dict(),
            "split": {"train": self.split.train, "val": self.split.val,
                      "test": self.split.test},
            "models": list(self.models),
            "training": self.training.to_dict(),
            "n_trials": self.n_trials,
            "base_seed": self.base_seed,
            "calibration_source": self.calibration_source,
            "curve_sizes": list(self.curve_sizes) if self.curve_sizes else None,
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        split = d["split"]
        training = d.get("training", {})
        training = {k: v for k, v in training.items() if k != "seed"}
        return cls(
            data=DataSource.from_dict(d["data"]),
            split=SplitSpec(split["train"], split["val"], split["test"]),
            models=tuple(d.get("models", MODEL_KINDS)),
            training=TrainConfig(**training),
            n_trials=d.get("n_trials", 10),
            base_seed=d.get("base_seed", 0),
            calibration_source=d.get("calibration_source", "train+val"),
            curve_sizes=tuple(d["curve_sizes"]) if d.get("curve_sizes") else None,
            out_dir=d.get("out_dir"),
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class TrialResult:
    trial: int
    seed: int
    split: SplitIndices
    models: dict          # kind -> {"uncorrected": model, "corrected": model}
    corrections: dict     # kind -> BiasCorrection
    reports: dict         # kind -> state -> {"dev": EvalReport, "test": EvalReport}
    test_predictions: dict  # kind -> state -> np.ndarray
    training_logs: dict   # kind -> log dict (mlp only)
    data_summary: dict


def _run_trial(dataset: Dataset, config: ExperimentConfig, trial: int) -> TrialResult:
    seed = config.base_seed + trial
    split = make_split(dataset.n_points, config.split, seed)
    train_ds = dataset.subset(split.train)
    val_ds = dataset.subset(split.val)
    dev_idx = np.concatenate([split.train, split.val])
    dev_ds = dataset.subset(dev_idx)
    test_ds = dataset.subset(split.test)
    calib_ds = {
        "train": train_ds, "val": val_ds, "train+val": dev_ds,
    }[config.calibration_source]

    models, corrections, reports = {}, {}, {}
    test_predictions, training_logs = {}, {}
    for kind in config.models:
        if kind == "linear":
            model = fit_linear(dev_ds)
        elif kind == "mean":
            model = fit_mean(dev_ds)
        else:
            train_cfg = dataclasses.replace(config.training, seed=seed)
            model, tlog = train_mlp(train_ds, val_ds, train_cfg)
            training_logs[kind] = tlog.to_dict()
        corrected, correction = calibrate_on(
            model, calib_ds, source_tag=config.calibration_source
        )
        models[kind] = {"uncorrected": model, "corrected": corrected}
        corrections[kind] = correction
        reports[kind] = {}
        test_predictions[kind] = {}
        for state, m in models[kind].items():
            dev_pred = m.predict(dev_ds.features)
            test_pred = m.predict(test_ds.features)
            reports[kind][state] = {
                "dev": evaluate_predictions(dev_pred, dev_ds.targets),
                "test": evaluate_predictions(test_pred, test_ds.targets),
            }
            test_predictions[kind][state] = test_pred
        log.info(
            "trial %d %s: delta_b=%.6g, test delta %.6g -> %.6g",
            trial, kind, corrections[kind].delta_b,
            reports[kind]["uncorrected"]["test"].delta_abs,
            reports[kind]["corrected"]["test"].delta_abs,
        )

    summary = {
        "dev_n": dev_ds.n_points,
        "test_n": test_ds.n_points,
        "dev_sum_targets": compensated_sum(dev_ds.targets),
        "dev_sum_abs_targets": compensated_sum(np.abs(dev_ds.targets)),
        "test_sum_targets": compensated_sum(test_ds.targets),
        "test_sum_abs_targets": compensated_sum(np.abs(test_ds.targets)),
    }
    return TrialResult(
        trial=trial, seed=seed, split=split, models=models,
        corrections=corrections, reports=reports,
        test_predictions=test_predictions, training_logs=training_logs,
        data_summary=summary,
    )


def _trial_worker(args):
    return _run_trial(*args)


@dataclass(frozen=True)
class ExperimentResult:
    out_dir: str | None
    table: dict           # label -> AggregateReport
    curves: dict          # label -> AccumulationCurve
    trials: list
    manifest: dict


def _labels(config: ExperimentConfig):
    out = []
    for kind in config.models:
        out.append((kind, "uncorrected", kind))
        out.append((kind, "corrected", f"{kind}_corrected"))
    return out


TABLE_CSV_HEADER = (
    "model,r2_train_mean,r2_train_se,r2_test_mean,r2_test_se,"
    "delta_train_mean,delta_train_se,delta_test_mean,delta_test_se,"
    "rel_test_mean,rel_test_se,n_trials"
)


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_outputs(out_dir: Path, config, dataset, trials, table, curves) -> list:
    written = []

    def note(path: Path):
        written.append(str(path.relative_to(out_dir)))

    table_json = {label: agg.to_dict() for label, agg in table.items()}
    _write_json(out_dir / "table.json", table_json)
    note(out_dir / "table.json")

    lines = [TABLE_CSV_HEADER]
    for label, agg in table.items():
        d = agg.to_dict()
        lines.append(",".join([
            label,
            repr(d["r2_train"]["mean"]), repr(d["r2_train"]["se"]),
            repr(d["r2_test"]["mean"]), repr(d["r2_test"]["se"]),
            repr(d["delta_train"]["mean"]), repr(d["delta_train"]["se"]),
            repr(d["delta_test"]["mean"]), repr(d["delta_test"]["se"]),
            repr(d["rel_test"]["mean"]), repr(d["rel_test"]["se"]),
            str(d["n_trials"]),
        ]))
    (out_dir / "table.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    note(out_dir / "table.csv")

    lines = ["model," + CURVE_CSV_HEADER]
    for label, curve in curves.items():
        for size, da, dse, ra, rse in curve.rows():
            lines.append(f"{label},{size},{da!r},{dse!r},{ra!r},{rse!r}")
    (out_dir / "curves.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    note(out_dir / "curves.csv")

    for tr in trials:
        tdir = out_dir / "models" / f"trial_{tr.trial:03d}"
        for kind, states in tr.models.items():
            save_model(states["uncorrected"], tdir / f"{kind}.json")
            note(tdir / f"{kind}.json")
            save_model(states["corrected"], tdir / f"{kind}_corrected.json")
            note(tdir / f"{kind}_corrected.json")
        _write_json(tdir / "split.json", {
            "train": [int(i) for i in tr.split.train],
            "val": [int(i) for i in tr.split.val],
            "test": [int(i) for i in tr.split.test],
            "seed": tr.split.seed,
        })
        note(tdir / "split.json")

        report_doc = {
            "trial": tr.trial,
            "seed": tr.seed,
            "calibration_source": config.calibration_source,
            "models": {
                kind: {
                    "uncorrected": {
                        s: r.to_dict() for s, r in tr.reports[kind]["uncorrected"].items()
                    },
                    "corrected": {
                        s: r.to_dict() for s, r in tr.reports[kind]["corrected"].items()
                    },
                    "correction": tr.corrections[kind].to_dict(),
                    "training_log": tr.training_logs.get(kind),
                }
                for kind in tr.models
            },
            "data": tr.data_summary,
        }
        _write_json(out_dir / "reports" / f"trial_{tr.trial:03d}.json", report_doc)
        note(out_dir / "reports" / f"trial_{tr.trial:03d}.json")

    return written


def run_experiment(config: ExperimentConfig, out_dir=None, jobs: int = 1) -> ExperimentResult:
    """Run all trials, aggregate, and (if an output dir is known) persist.

    ``jobs > 1`` distributes trials over processes; results are identical
    to a sequential run. Any trial failure aborts the run: a manifest with
    ``status: "failed"`` is still written so partial output dirs are
    recognizable.
    """
    out = out_dir or config.out_dir
    out = Path(out) if out is not None else None
    dataset = config.data.load()

    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(dataset.features).tobytes())
    digest.update(np.ascontiguousarray(dataset.targets).tobytes())

    try:
        if jobs > 1:
            args = [(dataset, config, t) for t in range(config.n_trials)]
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                trials = list(pool.map(_trial_worker, args))
        else:
            trials = [_run_trial(dataset, config, t)
                      for t in range(config.n_trials)]

        table, curves = {}, {}
        test_size = trials[0].data_summary["test_n"]
        sizes = (np.array(config.curve_sizes, dtype=np.int64)
                 if config.curve_sizes else default_size_grid(test_size))
        test_targets = [dataset.subset(tr.split.test).targets for tr in trials]
        for kind, state, label in _labels(config):
            pairs = [(tr.reports[kind][state]["dev"], tr.reports[kind][state]["test"])
                     for tr in trials]
            table[label] = aggregate_trials(pairs)
            curves[label] = accumulation_curve(
                [tr.test_predictions[kind][state] for tr in trials],
                test_targets, sizes=sizes, seed=config.base_seed,
            )

        manifest = {
            "status": "complete",
            "package_version": __version__,
            "config": config.to_dict(),
            "seeds": [tr.seed for tr in trials],
            "dataset": {
                "n_points": dataset.n_points,
                "n_features": dataset.n_features,
                "feature_names": list(dataset.feature_names),
                "sha256": digest.hexdigest(),
            },
            "labels": [label for _, _, label in _labels(config)],
            "outputs": [],
        }
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            written = _write_outputs(out, config, dataset, trials, table, curves)
            manifest["outputs"] = sorted(written + ["manifest.json"])
            _write_json(out / "manifest.json", manifest)
            log.info("experiment outputs written to %s", out)
    except Exception as exc:
        # flag whatever got written as an incomplete run
        if out is not None:
            _write_json(out / "manifest.json", {
                "status": "failed",
                "error": {"type": type(exc).__name__, "message": str(exc)},
                "config": config.to_dict(),
                "package_version": __version__,
            })
        log.error("experiment failed: %s", exc)
        raise

    return ExperimentResult(
        out_dir=str(out) if out is not None else None,
        table=table, curves=curves, trials=trials, manifest=manifest,
    )


def format_table(table: dict, like_percent: bool = True) -> str:
    """Human-readable table; relative test error shown in percent."""
    header = (
        f"{'model':<18} {'R2 dev':>8} {'R2 test':>8} "
        f"{'|sum r| dev':>12} {'|sum r| test':>14} {'rel test':>10}"
    )
    lines = [header, "-" * len(header)]
    for label, agg in table.items():
        rel = agg.rel_test.mean * (100.0 if like_percent else 1.0)
        rel_se = agg.rel_test.se * (100.0 if like_percent else 1.0)
        suffix = "%" if like_percent else ""
        lines.append(
            f"{label:<18} {agg.r2_train.mean:8.2f} {agg.r2_test.mean:8.2f} "
            f"{agg.delta_train.mean:12.4g} "
            f"{agg.delta_test.mean:9.4g}±{agg.delta_test.se:<4.2g} "
            f"{rel:7.2f}±{rel_se:<4.2g}{suffix}"
        )
    return "\n".join(lines)


def recompute_table_entry(out_dir, label: str, trial: int, dataset: Dataset):
    """Re-derive one trial's (dev_report, test_report) for ``label`` from
    the persisted model and split — the audit path proving that reported
    numbers follow from stored artifacts.
    """
    out_dir = Path(out_dir)
    tdir = out_dir / "models" / f"trial_{trial:03d}"
    model = load_model(tdir / f"{label}.json")
    with open(tdir / "split.json", "r", encoding="utf-8") as fh:
        split_doc = json.load(fh)
    dev = dataset.subset(np.array(split_doc["train"] + split_doc["val"]))
    test = dataset.subset(np.array(split_doc["test"]))
    return (
        evaluate_predictions(model.predict(dev.features), dev.targets),
        evaluate_predictions(model.predict(test.features), test.targets),
    )
