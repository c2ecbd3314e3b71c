"""Command-line interface: train, predict, benchmark, inspect.

Exit codes: 0 success, 2 configuration problem (flags, config file, model
structure), 3 data problem (missing or malformed input files, dimension
mismatches), 4 training diverged.  Hyperparameters come from built-in
defaults, overridden by an optional TOML config file, overridden by flags.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # 3.10
    import tomli as tomllib

import numpy as np

from .datasets import (
    CsvSchema,
    Scaler,
    WindowSpec,
    builtin_schema,
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
from .metrics import format_results_table, run_benchmark
from .model import (
    init_random,
    load_model,
    parameter_count,
    predict,
    save_model,
)
from .training import MODES, TrainConfig, train

_TRAIN_FIELD_NAMES = {f.name for f in dataclasses.fields(TrainConfig)}
_HYPER_FLAGS = ("eta0", "delta_mu", "delta_e", "epsilon", "alpha", "zeta",
                "iter_max", "t_max", "tprime_max")


def _load_config_file(path) -> dict:
    try:
        payload = tomllib.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid TOML: {exc}") from exc
    unknown = payload.keys() - _TRAIN_FIELD_NAMES
    if unknown:
        raise ConfigurationError(
            f"config file {path} has unknown keys: {sorted(unknown)}")
    return payload


def _build_train_config(args, protocol=None) -> TrainConfig:
    values: dict = {}
    if getattr(args, "config", None):
        values.update(_load_config_file(args.config))
    for name in _HYPER_FLAGS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    if getattr(args, "mode", None) is not None:
        values["mode"] = args.mode
    if getattr(args, "seed", None) is not None:
        values["seed"] = args.seed
    if "eta0" not in values and protocol is not None:
        values["eta0"] = protocol.default_eta0
    return TrainConfig(**values)


def _check_rules(n_rules: int) -> None:
    if n_rules < 1:
        raise ConfigurationError(f"--rules must be at least 1, got {n_rules}")


def _load_task_data(args, proto):
    """Load the file a protocol trains on: windowed series or tabular CSV."""
    if proto.lag is not None:
        series = load_series(args.data, column=getattr(args, "column", None))
        return windowize(series, WindowSpec(lag=proto.lag), name=Path(args.data).stem)
    if getattr(args, "schema", None):
        schema = CsvSchema.from_json(args.schema)
    else:
        schema = builtin_schema(proto.name)
    return load_csv(args.data, schema)


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n")


def cmd_train(args) -> int:
    _check_rules(args.rules)
    proto = get_protocol(args.protocol)
    cfg = _build_train_config(args, proto)
    data = _load_task_data(args, proto)
    train_raw, test_raw = split(data, proto.name, seed=cfg.seed)
    scaler = fit_scaler(train_raw)
    train_n = normalize(train_raw, scaler)
    test_n = normalize(test_raw, scaler) if test_raw is not None else None
    lo = train_n.inputs.min(axis=0)
    hi = train_n.inputs.max(axis=0)
    model0 = init_random(train_n.input_dim, args.rules, cfg.seed, feature_range=(lo, hi))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    progress = open(args.progress, "w") if args.progress else None
    try:
        fitted, report = train(model0, train_n, cfg, test_data=test_n, log_stream=progress)
    finally:
        if progress is not None:
            progress.close()

    save_model(fitted, out / "model.json")
    _write_json(out / "report.json", report.to_dict())
    _write_json(out / "scaler.json", scaler.to_dict())

    print(f"trained {cfg.mode} model: {fitted.n_rules} rules, "
          f"{parameter_count(fitted)} parameters")
    print(f"epochs run: {report.epochs_run} (best epoch {report.best_epoch}, "
          f"{report.wall_time_seconds:.2f}s)")
    line = f"train RMSE: {report.final_train_rmse:.6f}"
    if report.final_test_rmse is not None:
        line += f"  test RMSE: {report.final_test_rmse:.6f}"
    print(line)
    print(f"wrote {out / 'model.json'}, {out / 'report.json'}, {out / 'scaler.json'}")
    return 0


def _load_scaler(path) -> Scaler:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read scaler file {path}: {exc}") from exc
    return Scaler.from_dict(payload)


def cmd_predict(args) -> int:
    try:
        model = load_model(args.model)
    except ConfigurationError as exc:
        raise DataError(str(exc)) from exc

    scaler = None
    scaler_path = args.scaler
    if scaler_path is None:
        sibling = Path(args.model).parent / "scaler.json"
        if sibling.exists():
            scaler_path = sibling
    if scaler_path is not None:
        scaler = _load_scaler(scaler_path)

    if args.schema:
        inputs = load_csv(args.data, CsvSchema.from_json(args.schema)).inputs
    else:
        inputs = load_matrix(args.data)
    if inputs.shape[1] != model.input_dim:
        raise DataError(
            f"model expects {model.input_dim} inputs, data file has {inputs.shape[1]} columns")

    if scaler is not None:
        inputs = scaler.transform_inputs(inputs)
    outputs = predict(model, inputs)
    if scaler is not None:
        outputs = scaler.invert_targets(outputs)

    out = Path(args.out)
    with open(out, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["index", "prediction"])
        for i, value in enumerate(outputs):
            writer.writerow([i, repr(float(value))])
    print(f"wrote {len(outputs)} predictions to {out}")
    return 0


def cmd_benchmark(args) -> int:
    _check_rules(args.rules)
    proto = get_protocol(args.protocol)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    if not modes:
        raise ConfigurationError("--modes must name at least one training mode")
    for mode in modes:
        if mode not in MODES:
            raise ConfigurationError(f"--modes entries must be in {MODES}, got {mode!r}")
    if args.seeds < 1:
        raise ConfigurationError(f"--seeds must be at least 1, got {args.seeds}")
    cfg = _build_train_config(args, proto)
    data = _load_task_data(args, proto)

    results = [
        run_benchmark(data, proto.name, args.rules, cfg, n_seeds=args.seeds,
                      mode=mode, max_workers=args.workers)
        for mode in modes
    ]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "results.json", [r.to_dict() for r in results])
    table = format_results_table(results)
    (out / "table.txt").write_text(table + "\n")
    print(table)

    if proto.original_units:
        plotted = next((r for r in results if r.best_predicted is not None), None)
        if plotted is not None:
            with open(out / "plot.csv", "w", newline="") as handle:
                writer = csv.writer(handle)
                writer.writerow(["index", "actual", "predicted", "error"])
                for i, (a, p) in enumerate(zip(plotted.best_actual, plotted.best_predicted)):
                    writer.writerow([i, repr(float(a)), repr(float(p)),
                                     repr(float(p - a))])
            print(f"wrote {out / 'plot.csv'} from {plotted.mode} seed {plotted.best_seed}")
    print(f"wrote {out / 'results.json'}, {out / 'table.txt'}")
    return 0


def _render_consequent(consequent: np.ndarray) -> str:
    parts = []
    bias = float(consequent[0])
    if bias != 0.0 or len(consequent) == 1:
        parts.append(f"{bias:g}")
    for j, coef in enumerate(consequent[1:], start=1):
        coef = float(coef)
        if coef == 0.0:
            continue
        term = f"{abs(coef):g}·x{j}"
        if not parts:
            parts.append(term if coef > 0 else f"-{term}")
        else:
            parts.append(f"+ {term}" if coef > 0 else f"- {term}")
    if not parts:
        parts.append("0")
    return "y = " + " ".join(parts)


def _format_vector(values: np.ndarray) -> str:
    return "[" + ", ".join(f"{float(v):g}" for v in values) + "]"


def cmd_inspect(args) -> int:
    try:
        model = load_model(args.model)
    except ConfigurationError as exc:
        raise DataError(str(exc)) from exc
    print(f"model: {model.input_dim} inputs, {model.n_rules} rules, "
          f"{parameter_count(model)} parameters")
    identity = np.eye(model.input_dim)
    for i, rule in enumerate(model.rules, start=1):
        print(f"rule {i}:")
        print(f"  center: {_format_vector(rule.center)}")
        print(f"  shape regulator: {rule.shape_regulator:g}")
        print(f"  consequent: {_render_consequent(rule.consequent)}")
        if np.allclose(rule.transform, identity):
            print("  feature mixing: axis-aligned (identity)")
        else:
            flat = [(abs(v), l + 1, j + 1, v)
                    for (l, j), v in np.ndenumerate(rule.transform)]
            flat.sort(reverse=True)
            shown = ", ".join(f"gamma[{l},{j}] = {v:.3g}"
                              for _, l, j, v in flat[:args.top])
            print(f"  feature mixing (top {min(args.top, len(flat))} entries): {shown}")
    return 0


def _add_hyper_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="TOML file setting hyperparameter defaults")
    sub.add_argument("--eta0", type=float, help="base learning rate")
    sub.add_argument("--delta-mu", type=float, dest="delta_mu",
                     help="premise-phase stop threshold")
    sub.add_argument("--delta-e", type=float, dest="delta_e",
                     help="output-phase stop threshold")
    sub.add_argument("--epsilon", type=float, help="outer-loop stop threshold")
    sub.add_argument("--alpha", type=float, help="update-average smoothing factor")
    sub.add_argument("--zeta", type=float, help="learning-rate decay factor")
    sub.add_argument("--iter-max", type=int, dest="iter_max", help="epoch cap")
    sub.add_argument("--t-max", type=int, dest="t_max", help="premise-phase step cap")
    sub.add_argument("--tprime-max", type=int, dest="tprime_max",
                     help="output-phase step cap")


def _add_data_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--data", required=True, help="input CSV file")
    sub.add_argument("--protocol", required=True,
                     help="benchmark split protocol (see README)")
    sub.add_argument("--rules", type=int, required=True, help="number of fuzzy rules")
    sub.add_argument("--schema", help="JSON column schema for tabular data")
    sub.add_argument("--column", help="price column name for windowed series data")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tskicfnn",
        description="Correlation-aware TSK fuzzy network: train, predict, benchmark, inspect.")
    commands = parser.add_subparsers(dest="command", required=True)

    p_train = commands.add_parser("train", help="train one model and save it")
    _add_data_flags(p_train)
    p_train.add_argument("--mode", choices=MODES, help="training algorithm")
    p_train.add_argument("--seed", type=int, help="seed for split and initialization")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--progress", help="write per-epoch JSONL records here")
    _add_hyper_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_predict = commands.add_parser("predict", help="run a saved model on new inputs")
    p_predict.add_argument("--model", required=True, help="model JSON file")
    p_predict.add_argument("--data", required=True, help="CSV of input rows")
    p_predict.add_argument("--schema", help="JSON column schema for the input file")
    p_predict.add_argument("--scaler", help="scaler JSON (default: next to the model)")
    p_predict.add_argument("--out", required=True, help="predictions CSV to write")
    p_predict.set_defaults(func=cmd_predict)

    p_bench = commands.add_parser("benchmark", help="multi-seed paired comparison")
    _add_data_flags(p_bench)
    p_bench.add_argument("--seeds", type=int, default=10, help="number of seeds")
    p_bench.add_argument("--modes", default="stepwise,backprop",
                         help="comma-separated training modes to compare")
    p_bench.add_argument("--workers", type=int, help="parallel seed processes")
    p_bench.add_argument("--out", required=True, help="output directory")
    _add_hyper_flags(p_bench)
    p_bench.set_defaults(func=cmd_benchmark)

    p_inspect = commands.add_parser("inspect", help="print a readable rule summary")
    p_inspect.add_argument("--model", required=True, help="model JSON file")
    p_inspect.add_argument("--top", type=int, default=3,
                           help="feature-mixing entries to show per rule")
    p_inspect.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
