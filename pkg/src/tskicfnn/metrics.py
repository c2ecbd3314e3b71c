"""Evaluation: RMSE, multi-seed benchmark runs, and result formatting.

A benchmark run repeats the same experiment across seeds: split the data by
the protocol, fit scaling on the training rows, draw a fresh model from the
seed, train, and score the held-out split.  The initial model for a seed
depends only on the data, protocol, rule count, and seed, never on the
training mode, so stepwise and backprop comparisons start from identical
networks.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .datasets import Dataset, denormalize, fit_scaler, get_protocol, normalize, split
from .errors import ConfigurationError, TrainingDiverged
from .model import init_random, model_digest, parameter_count, predict
from .training import TrainConfig, train

THREADS_ENV = "TSKICFNN_THREADS"


def rmse(predictions: np.ndarray, targets: np.ndarray) -> float:
    """Root mean squared error over two equal-length vectors."""
    predictions = np.asarray(predictions, dtype=float).ravel()
    targets = np.asarray(targets, dtype=float).ravel()
    if predictions.shape != targets.shape:
        raise ValueError(
            f"predictions {predictions.shape} and targets {targets.shape} differ in length")
    if predictions.size == 0:
        raise ValueError("rmse of empty vectors is undefined")
    e = predictions - targets
    return float(np.sqrt(np.mean(e * e)))


def default_config(protocol: str | None = None, **overrides) -> TrainConfig:
    """Stock hyperparameters, with the protocol's base learning rate applied
    unless explicitly overridden."""
    if protocol is not None and "eta0" not in overrides:
        overrides["eta0"] = get_protocol(protocol).default_eta0
    return TrainConfig(**overrides)


@dataclass
class ExperimentResult:
    """Multi-seed outcome of one (protocol, rule count, mode) experiment."""

    benchmark: str
    mode: str
    n_rules: int
    input_dim: int
    parameter_count: int
    seeds: list
    rmse_values: list
    failed_seeds: list
    mean_rmse: float | None
    std_rmse: float | None
    train_seconds: list
    init_digests: list
    original_units: bool
    best_seed: int | None = None
    best_actual: np.ndarray | None = field(default=None, repr=False)
    best_predicted: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self, include_timing: bool = False) -> dict:
        payload = {
            "benchmark": self.benchmark,
            "mode": self.mode,
            "n_rules": self.n_rules,
            "input_dim": self.input_dim,
            "parameter_count": self.parameter_count,
            "seeds": self.seeds,
            "rmse_values": self.rmse_values,
            "failed_seeds": self.failed_seeds,
            "mean_rmse": self.mean_rmse,
            "std_rmse": self.std_rmse,
            "init_digests": self.init_digests,
            "original_units": self.original_units,
            "best_seed": self.best_seed,
        }
        if include_timing:
            payload["train_seconds"] = self.train_seconds
        return payload


def prepare_run(data: Dataset, protocol: str, n_rules: int, seed: int):
    """Split, scale, and draw the seed's initial model.

    Shared by every training mode so comparisons are paired: the returned
    initial model is a function of (data, protocol, n_rules, seed) only.
    """
    train_raw, test_raw = split(data, protocol, seed=seed)
    if test_raw is None:
        raise ConfigurationError(
            f"protocol {protocol!r} has no held-out split to evaluate")
    scaler = fit_scaler(train_raw)
    train_n = normalize(train_raw, scaler)
    test_n = normalize(test_raw, scaler)
    lo = train_n.inputs.min(axis=0)
    hi = train_n.inputs.max(axis=0)
    model0 = init_random(train_n.input_dim, n_rules, seed, feature_range=(lo, hi))
    return train_n, test_n, test_raw, scaler, model0


def _run_seed(payload: tuple) -> dict:
    data, protocol, n_rules, cfg, seed, mode = payload
    proto = get_protocol(protocol)
    train_n, test_n, test_raw, scaler, model0 = prepare_run(data, protocol, n_rules, seed)
    cfg_run = replace(cfg, mode=mode, seed=seed)
    digest = model_digest(model0)
    started = time.perf_counter()
    try:
        fitted, _report = train(model0, train_n, cfg_run)
    except TrainingDiverged as exc:
        return {"seed": seed, "failed": str(exc), "digest": digest,
                "seconds": time.perf_counter() - started}
    predictions = predict(fitted, test_n.inputs)
    if proto.original_units:
        predicted = denormalize(predictions, scaler)
        actual = test_raw.targets
    else:
        predicted = predictions
        actual = test_n.targets
    return {
        "seed": seed,
        "rmse": rmse(predicted, actual),
        "digest": digest,
        "seconds": time.perf_counter() - started,
        "actual": actual,
        "predicted": predicted,
    }


def _resolve_workers(max_workers: int | None) -> int:
    if max_workers is not None:
        return max(1, int(max_workers))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def run_benchmark(data: Dataset, protocol: str, n_rules: int,
                  cfg: TrainConfig | None = None, n_seeds: int = 10,
                  mode: str = "stepwise", max_workers: int | None = None) -> ExperimentResult:
    """Train and score ``n_seeds`` paired runs; seeds are 0..n_seeds-1.

    Seeds whose training aborts on a non-finite objective are recorded as
    failed and excluded from the mean.  With more than one worker, seeds run
    in separate processes; results are merged in seed order either way.
    """
    if n_seeds < 1:
        raise ConfigurationError(f"n_seeds must be >= 1, got {n_seeds}")
    proto = get_protocol(protocol)
    if cfg is None:
        cfg = default_config(protocol)
    payloads = [(data, protocol, n_rules, cfg, seed, mode) for seed in range(n_seeds)]
    workers = _resolve_workers(max_workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_seed, payloads))
    else:
        outcomes = [_run_seed(p) for p in payloads]

    seeds, values, failed, seconds, digests = [], [], [], [], []
    best = None
    for outcome in outcomes:
        seconds.append(outcome["seconds"])
        digests.append(outcome["digest"])
        if "failed" in outcome:
            failed.append(outcome["seed"])
            continue
        seeds.append(outcome["seed"])
        values.append(outcome["rmse"])
        if best is None or outcome["rmse"] < best["rmse"]:
            best = outcome

    input_dim = data.input_dim
    probe = init_random(input_dim, n_rules, 0)
    result = ExperimentResult(
        benchmark=protocol,
        mode=mode,
        n_rules=n_rules,
        input_dim=input_dim,
        parameter_count=parameter_count(probe),
        seeds=seeds,
        rmse_values=values,
        failed_seeds=failed,
        mean_rmse=float(np.mean(values)) if values else None,
        std_rmse=float(np.std(values)) if values else None,
        train_seconds=seconds,
        init_digests=digests,
        original_units=proto.original_units,
    )
    if best is not None:
        result.best_seed = best["seed"]
        result.best_actual = best["actual"]
        result.best_predicted = best["predicted"]
    return result


def format_results_table(results) -> str:
    """Plain-text comparison table: method, rule count, seed-averaged RMSE."""
    rows = [("method", "no. neurons", "RMSE")]
    notes = []
    for r in results:
        if r.mean_rmse is None:
            score = "n/a (all seeds failed)"
        elif r.std_rmse is not None and len(r.rmse_values) > 1:
            score = f"{r.mean_rmse:.4f} ± {r.std_rmse:.4f}"
        else:
            score = f"{r.mean_rmse:.4f}"
        rows.append((r.mode, str(r.n_rules), score))
        if r.failed_seeds:
            notes.append(f"note: {r.mode} failed on seeds {r.failed_seeds}")
    widths = [max(len(row[i]) for row in rows) for i in range(3)]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
             for row in rows]
    return "\n".join(lines + notes)
