"""biascorr: post-hoc output-bias correction for least-squares regression.

A fitted regression model often carries a systematic offset on new data —
the residuals stop summing to zero, and any *total* computed from its
predictions drifts linearly with the number of points. This package
measures that drift, removes it by shifting the model's scalar output
bias by the mean calibration residual, and ships an experiment harness
that quantifies the effect across random trials.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataError,
    DegenerateDataError,
    InsufficientDataError,
    NonFiniteError,
    ShapeMismatchError,
    SingularMatrixError,
    TrainingDivergedError,
)
from .core import (
    BiasCorrection,
    Dataset,
    EvalReport,
    SplitIndices,
    compensated_mean,
    compensated_sum,
)
from .data import (
    CsvSchema,
    GAS_TURBINE_ROWS,
    GAS_TURBINE_SCHEMA,
    SplitSpec,
    Standardizer,
    SynthSpec,
    SyntheticTruth,
    apply_standardizer,
    fit_standardizer,
    generate_synthetic,
    invert_standardizer,
    load_csv,
    make_split,
    synthetic_truth,
    write_dataset_cache,
)
from .models import (
    LinearModel,
    MeanModel,
    MlpModel,
    fit_linear,
    fit_mean,
    init_mlp,
    load_model,
    mlp_raw_outputs,
    model_from_json,
    model_to_json,
    predict,
    save_model,
)
from .training import TrainConfig, TrainingLog, gradient, train_mlp
from .calibration import apply_correction, calibrate_on, compute_delta_b
from .metrics import (
    CURVE_CSV_HEADER,
    AccumulationCurve,
    AggregateReport,
    MetricSummary,
    accumulation_curve,
    aggregate_trials,
    default_size_grid,
    evaluate_model,
    evaluate_predictions,
    mse,
    r_squared,
    relative_systematic_error,
    relative_total_error,
    total_error,
    total_error_signed,
    write_curve_csv,
)
from .experiment import (
    DataSource,
    ExperimentConfig,
    ExperimentResult,
    TrialResult,
    format_table,
    recompute_table_entry,
    run_experiment,
)

__all__ = [
    "__version__",
    # errors
    "ConfigError", "DataError", "DegenerateDataError", "InsufficientDataError",
    "NonFiniteError", "ShapeMismatchError", "SingularMatrixError",
    "TrainingDivergedError",
    # core
    "BiasCorrection", "Dataset", "EvalReport", "SplitIndices",
    "compensated_mean", "compensated_sum",
    # data
    "CsvSchema", "GAS_TURBINE_ROWS", "GAS_TURBINE_SCHEMA", "SplitSpec",
    "Standardizer", "SynthSpec", "SyntheticTruth", "apply_standardizer",
    "fit_standardizer", "generate_synthetic", "invert_standardizer",
    "load_csv", "make_split", "synthetic_truth", "write_dataset_cache",
    # models
    "LinearModel", "MeanModel", "MlpModel", "fit_linear", "fit_mean",
    "init_mlp", "load_model", "mlp_raw_outputs", "model_from_json",
    "model_to_json", "predict", "save_model",
    # training
    "TrainConfig", "TrainingLog", "gradient", "train_mlp",
    # calibration
    "apply_correction", "calibrate_on", "compute_delta_b",
    # metrics
    "AccumulationCurve", "AggregateReport", "CURVE_CSV_HEADER",
    "MetricSummary", "accumulation_curve", "aggregate_trials",
    "default_size_grid", "evaluate_model", "evaluate_predictions", "mse",
    "r_squared", "relative_systematic_error", "relative_total_error",
    "total_error", "total_error_signed", "write_curve_csv",
    # experiment
    "DataSource", "ExperimentConfig", "ExperimentResult", "TrialResult",
    "format_table", "recompute_table_entry", "run_experiment",
]
