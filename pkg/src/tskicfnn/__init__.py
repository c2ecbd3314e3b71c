"""Correlation-aware TSK fuzzy network with stepwise constrained-target training."""

from .datasets import (
    ColumnSpec,
    CsvSchema,
    Dataset,
    PROTOCOLS,
    Scaler,
    SplitProtocol,
    WindowSpec,
    builtin_schema,
    denormalize,
    fit_scaler,
    get_protocol,
    load_csv,
    load_matrix,
    load_series,
    normalize,
    split,
    windowize,
)
from .errors import ConfigurationError, DataError, TrainingDiverged
from .metrics import (
    ExperimentResult,
    default_config,
    format_results_table,
    prepare_run,
    rmse,
    run_benchmark,
)
from .model import (
    BatchTrace,
    ForwardTrace,
    Model,
    RuleParams,
    firing_strengths,
    forward,
    forward_batch,
    init_random,
    load_model,
    membership,
    model_digest,
    model_from_dict,
    model_to_dict,
    parameter_count,
    predict,
    save_model,
    transform_inputs,
)
from .targets import PremiseTargets, solve_targets
from .training import (
    LrState,
    TrainConfig,
    TrainReport,
    grad_backprop,
    grad_consequent,
    grad_premise,
    lr_update,
    output_objective,
    premise_objective,
    train,
    train_backprop,
    train_stepwise,
)

__version__ = "0.1.0"

__all__ = [
    "BatchTrace",
    "ColumnSpec",
    "ConfigurationError",
    "CsvSchema",
    "DataError",
    "Dataset",
    "ExperimentResult",
    "ForwardTrace",
    "LrState",
    "Model",
    "PROTOCOLS",
    "PremiseTargets",
    "RuleParams",
    "Scaler",
    "SplitProtocol",
    "TrainConfig",
    "TrainReport",
    "TrainingDiverged",
    "WindowSpec",
    "builtin_schema",
    "default_config",
    "denormalize",
    "firing_strengths",
    "fit_scaler",
    "format_results_table",
    "forward",
    "forward_batch",
    "get_protocol",
    "grad_backprop",
    "grad_consequent",
    "grad_premise",
    "init_random",
    "load_csv",
    "load_matrix",
    "load_model",
    "load_series",
    "lr_update",
    "membership",
    "model_digest",
    "model_from_dict",
    "model_to_dict",
    "normalize",
    "output_objective",
    "parameter_count",
    "predict",
    "premise_objective",
    "prepare_run",
    "rmse",
    "run_benchmark",
    "save_model",
    "solve_targets",
    "split",
    "train",
    "train_backprop",
    "train_stepwise",
    "transform_inputs",
    "windowize",
]
