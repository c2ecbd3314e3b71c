"""Training loops: stepwise constrained-target learning and a backprop baseline.

The stepwise trainer alternates three phases per epoch: an exact per-row
projection that turns the regression targets into desired rule activations
(``targets.solve_targets``), gradient descent on the premise parameters to pull
activations toward those desired values, and gradient descent on the
consequent coefficients against the output error.  The backprop baseline
trains the identical architecture by descending the output error with respect
to every parameter at once.

Both trainers share one per-parameter adaptive step size: each scalar keeps
an exponential average of its past updates and shrinks its learning rate
whenever the fresh update disagrees in sign with that average.  Rates never
grow, so step sizes ratchet down on oscillating coordinates.
"""

from __future__ import annotations

import functools
import json
import math
import time
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .errors import ConfigurationError, DataError, TrainingDiverged
from .model import (
    SHAPE_REGULATOR_MAX,
    SHAPE_REGULATOR_MIN,
    ACTIVATION_FLOOR,
    BatchTrace,
    Model,
    RuleParams,
    _stack_consequents,
    _stack_premise,
    firing_strengths,
    model_digest,
    predict,
    premise_state,
)
from .targets import solve_targets

# Non-finite gradient elements are replaced before the update is applied:
# infinities keep their sign at this magnitude, NaNs become zero.
GRADIENT_CLAMP = 1e6

MODES = ("stepwise", "backprop")


@dataclass
class TrainConfig:
    """Hyperparameters shared by both trainers."""

    eta0: float = 1e-3
    delta_mu: float = 1e-3
    delta_e: float = 1e-3
    epsilon: float = 1e-6
    alpha: float = 0.7
    zeta: float = 0.9
    iter_max: int = 200
    t_max: int = 500
    tprime_max: int = 500
    mode: str = "stepwise"
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("eta0", "delta_mu", "delta_e", "epsilon"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and value > 0 and math.isfinite(value)):
                raise ConfigurationError(f"{name} must be a positive finite number, got {value!r}")
        for name in ("alpha", "zeta"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ConfigurationError(f"{name} must lie in (0, 1), got {value!r}")
        for name in ("iter_max", "t_max", "tprime_max"):
            value = getattr(self, name)
            if not (isinstance(value, int) and value >= 1):
                raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not isinstance(self.seed, int):
            raise ConfigurationError(f"seed must be an integer, got {self.seed!r}")


@dataclass
class LrState:
    """Per-parameter learning rates and the trailing update average."""

    eta: np.ndarray
    delta_avg: np.ndarray

    @classmethod
    def initial(cls, shape, eta0: float) -> "LrState":
        return cls(eta=np.full(shape, float(eta0)), delta_avg=np.zeros(shape))


def lr_update(state: LrState, delta: np.ndarray, alpha: float, zeta: float) -> LrState:
    """Fold an update into the trailing average, then shrink rates that flipped.

    The average moves first; a rate is multiplied by zeta exactly where the
    fresh update and the moved average disagree in sign.  A zero on either
    side leaves the rate unchanged.  Rates therefore never increase.
    """
    delta = np.asarray(delta, dtype=float)
    avg = alpha * delta + (1.0 - alpha) * state.delta_avg
    eta = np.where(avg * delta < 0.0, zeta * state.eta, state.eta)
    return LrState(eta=eta, delta_avg=avg)


@dataclass
class TrainReport:
    """Per-run record: objective histories, counters, and final quality."""

    mode: str
    epochs_run: int
    j1_history: list
    j2_history: list
    j3_history: list
    rmse_history: list
    degenerate_rows: list
    clamped_gradients: int
    best_epoch: int
    final_train_rmse: float
    final_test_rmse: float | None
    wall_time_seconds: float
    initial_model_digest: str

    def to_dict(self, include_timing: bool = False) -> dict:
        payload = {
            "mode": self.mode,
            "epochs_run": self.epochs_run,
            "j1_history": self.j1_history,
            "j2_history": self.j2_history,
            "j3_history": self.j3_history,
            "rmse_history": self.rmse_history,
            "degenerate_rows": self.degenerate_rows,
            "clamped_gradients": self.clamped_gradients,
            "best_epoch": self.best_epoch,
            "final_train_rmse": self.final_train_rmse,
            "final_test_rmse": self.final_test_rmse,
            "initial_model_digest": self.initial_model_digest,
        }
        # Wall time is volatile, so identical runs stay byte-identical on disk
        # unless timing is explicitly requested.
        if include_timing:
            payload["wall_time_seconds"] = self.wall_time_seconds
        return payload


@dataclass
class _Params:
    """Packed parameter arrays; the trainers' working representation."""

    centers: np.ndarray      # (R, n)
    transforms: np.ndarray   # (R, n, n)
    shapes: np.ndarray       # (R,)
    consequents: np.ndarray  # (R, n + 1)

    @classmethod
    def from_model(cls, model: Model) -> "_Params":
        centers, transforms, shapes = _stack_premise(model)
        return cls(centers=centers.copy(), transforms=transforms.copy(),
                   shapes=shapes.copy(), consequents=_stack_consequents(model).copy())

    def copy(self) -> "_Params":
        return _Params(self.centers.copy(), self.transforms.copy(),
                       self.shapes.copy(), self.consequents.copy())

    def to_model(self, input_dim: int) -> Model:
        rules = [
            RuleParams(center=self.centers[r], transform=self.transforms[r],
                       shape_regulator=float(self.shapes[r]), consequent=self.consequents[r])
            for r in range(len(self.shapes))
        ]
        return Model(input_dim=input_dim, rules=rules)


@dataclass
class _Counters:
    clamped: int = 0


def _clamped(delta: np.ndarray, counters: _Counters) -> np.ndarray:
    bad = ~np.isfinite(delta)
    if bad.any():
        counters.clamped += int(bad.sum())
        delta = np.where(np.isnan(delta), 0.0, delta)
        delta = np.where(np.isposinf(delta), GRADIENT_CLAMP, delta)
        delta = np.where(np.isneginf(delta), -GRADIENT_CLAMP, delta)
    return delta


def _check(value: float, epoch: int, phase: str) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise TrainingDiverged(f"non-finite objective at epoch {epoch}, phase {phase}")
    return value


def _premise_deltas(st, transforms: np.ndarray, shapes: np.ndarray,
                    weight: np.ndarray):
    """Update directions (negative gradients) for the premise parameters.

    ``weight`` is dJ/dmu per instance and rule, shape (N, R); everything
    else comes from the premise state.  Uses z * z2**(beta-1) for the chain
    through the mixed features and (z^2)^beta * log(z^2) for the shape
    regulator, both already available from the forward quantities.
    """
    c = weight * st.mu                                   # (N, R)
    cb = c * shapes[None, :]
    t = st.z * st.powed / st.z2                          # z * (z^2)^(beta-1)
    d_transform = np.einsum("kr,krl,krj->rlj", cb, t, st.diff)
    d_center = -np.einsum("kr,krl,rlj->rj", cb, t, transforms)
    d_shape = 0.5 * np.einsum("kr,krl->r", c, st.powed * st.log_z2)
    return d_transform, d_center, d_shape


def _consequent_delta(e: np.ndarray, phi: np.ndarray, xext: np.ndarray) -> np.ndarray:
    """Update direction (negative gradient) for the consequent coefficients."""
    return -np.einsum("k,kr,kj->rj", e, phi, xext)


def _extend(inputs: np.ndarray) -> np.ndarray:
    return np.concatenate([np.ones((len(inputs), 1)), inputs], axis=1)


def grad_premise(model: Model, trace: BatchTrace, psi: np.ndarray):
    """Negative gradient of the activation-fit objective w.r.t. premise params.

    Returns (d_transform, d_center, d_shape) with the shapes of the packed
    parameter arrays; the objective is 0.5 * sum((mu - psi)**2).
    """
    centers, transforms, shapes = _stack_premise(model)
    st = premise_state(centers, transforms, shapes, trace.inputs)
    return _premise_deltas(st, transforms, shapes, st.mu - np.asarray(psi, float))


def grad_consequent(model: Model, trace: BatchTrace, targets: np.ndarray) -> np.ndarray:
    """Negative gradient of the output error w.r.t. consequents, premise fixed."""
    e = trace.output - np.asarray(targets, dtype=float)
    return _consequent_delta(e, trace.firing_strength, _extend(trace.inputs))


def grad_backprop(model: Model, trace: BatchTrace, targets: np.ndarray):
    """Negative gradient of the output error w.r.t. every parameter.

    Returns (d_transform, d_center, d_shape, d_consequent).  The premise
    part chains the error through the normalization layer:
    dJ/dmu_i = e * (rule_output_i - output) / sum(activations).
    """
    centers, transforms, shapes = _stack_premise(model)
    st = premise_state(centers, transforms, shapes, trace.inputs)
    e = trace.output - np.asarray(targets, dtype=float)
    s = np.maximum(st.mu, ACTIVATION_FLOOR).sum(axis=1)
    w = e[:, None] * (trace.rule_output - trace.output[:, None]) / s[:, None]
    d_transform, d_center, d_shape = _premise_deltas(st, transforms, shapes, w)
    d_consequent = _consequent_delta(e, trace.firing_strength, _extend(trace.inputs))
    return d_transform, d_center, d_shape, d_consequent


def premise_objective(model: Model, inputs: np.ndarray, psi: np.ndarray) -> float:
    """0.5 * sum((mu - psi)**2) over a batch; the premise-phase objective."""
    centers, transforms, shapes = _stack_premise(model)
    st = premise_state(centers, transforms, shapes, np.asarray(inputs, float))
    return float(0.5 * ((st.mu - np.asarray(psi, float)) ** 2).sum())


def output_objective(model: Model, inputs: np.ndarray, targets: np.ndarray) -> float:
    """0.5 * sum((output - target)**2) over a batch; the output objective."""
    e = predict(model, inputs) - np.asarray(targets, dtype=float)
    return float(0.5 * (e @ e))


def _premise_phase(p: _Params, inputs: np.ndarray, psi: np.ndarray,
                   cfg: TrainConfig, counters: _Counters, epoch: int):
    """Descend the activation-fit objective until its mean stops moving.

    Mutates ``p`` in place; returns the fresh premise state and the per-step
    objective history (sum form, first entry is the entering value).
    """
    st = premise_state(p.centers, p.transforms, p.shapes, inputs)
    j2 = _check(0.5 * ((st.mu - psi) ** 2).sum(), epoch, "premise")
    lr_t = LrState.initial(p.transforms.shape, cfg.eta0)
    lr_c = LrState.initial(p.centers.shape, cfg.eta0)
    lr_s = LrState.initial(p.shapes.shape, cfg.eta0)
    history = [j2]
    for _ in range(cfg.t_max):
        d_t, d_c, d_s = _premise_deltas(st, p.transforms, p.shapes, st.mu - psi)
        d_t = _clamped(d_t, counters)
        d_c = _clamped(d_c, counters)
        d_s = _clamped(d_s, counters)
        p.transforms += lr_t.eta * d_t
        p.centers += lr_c.eta * d_c
        p.shapes = np.clip(p.shapes + lr_s.eta * d_s,
                           SHAPE_REGULATOR_MIN, SHAPE_REGULATOR_MAX)
        lr_t = lr_update(lr_t, d_t, cfg.alpha, cfg.zeta)
        lr_c = lr_update(lr_c, d_c, cfg.alpha, cfg.zeta)
        lr_s = lr_update(lr_s, d_s, cfg.alpha, cfg.zeta)
        st = premise_state(p.centers, p.transforms, p.shapes, inputs)
        j2_new = _check(0.5 * ((st.mu - psi) ** 2).sum(), epoch, "premise")
        history.append(j2_new)
        done = abs(j2 - j2_new) < cfg.delta_mu
        j2 = j2_new
        if done:
            break
    return st, history


def _consequent_phase(p: _Params, xext: np.ndarray, targets: np.ndarray,
                      phi: np.ndarray, cfg: TrainConfig, counters: _Counters,
                      epoch: int):
    """Descend the output error in the consequents at fixed firing strengths.

    Mutates ``p`` in place; returns (rule_output, output, error, history).
    """
    rule_out = xext @ p.consequents.T
    yhat = (phi * rule_out).sum(axis=1)
    e = yhat - targets
    j3 = _check(0.5 * (e @ e), epoch, "consequent")
    lr_a = LrState.initial(p.consequents.shape, cfg.eta0)
    history = [j3]
    for _ in range(cfg.tprime_max):
        d_a = _clamped(_consequent_delta(e, phi, xext), counters)
        p.consequents += lr_a.eta * d_a
        lr_a = lr_update(lr_a, d_a, cfg.alpha, cfg.zeta)
        rule_out = xext @ p.consequents.T
        yhat = (phi * rule_out).sum(axis=1)
        e = yhat - targets
        j3_new = _check(0.5 * (e @ e), epoch, "consequent")
        history.append(j3_new)
        done = abs(j3 - j3_new) < cfg.delta_e
        j3 = j3_new
        if done:
            break
    return rule_out, yhat, e, history


def _validate_training_inputs(model: Model, data) -> tuple[np.ndarray, np.ndarray]:
    model.validate()
    inputs = np.asarray(data.inputs, dtype=float)
    targets = np.asarray(data.targets, dtype=float)
    if inputs.ndim != 2 or inputs.shape[1] != model.input_dim:
        raise DataError(
            f"training inputs have shape {inputs.shape}, expected (N, {model.input_dim})")
    if targets.shape != (len(inputs),):
        raise DataError(
            f"training targets have shape {targets.shape}, expected ({len(inputs)},)")
    if len(inputs) == 0:
        raise DataError("training set is empty")
    return inputs, targets


def _final_rmse(result: Model, data) -> float:
    e = predict(result, np.asarray(data.inputs, float)) - np.asarray(data.targets, float)
    return float(np.sqrt(np.mean(e * e)))


def _emit(log_stream: IO[str] | None, epoch: int, j1, j2, j3, rmse) -> None:
    if log_stream is not None:
        record = {"epoch": epoch, "j1": j1, "j2": j2, "j3": j3, "rmse": rmse}
        log_stream.write(json.dumps(record) + "\n")


def _quiet_overflow(fn):
    """Suppress numpy overflow/invalid warnings inside a trainer.

    Divergence is an anticipated outcome: non-finite objectives raise
    TrainingDiverged via _check and non-finite gradients are replaced by
    _clamped, so the warnings would only add stderr noise on runs whose
    failure is already handled.
    """
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        with np.errstate(over="ignore", invalid="ignore"):
            return fn(*args, **kwargs)
    return wrapper


@_quiet_overflow
def train_stepwise(model: Model, data, cfg: TrainConfig,
                   test_data=None, log_stream=None) -> tuple[Model, TrainReport]:
    """Run the three-phase stepwise algorithm; returns (best model, report).

    Per epoch: solve desired activations once, fit the premise to them, then
    fit the consequents to the targets.  The outer loop stops when the
    activation-fit objective, re-evaluated with fresh firing strengths
    against this epoch's desired activations, stops moving by ``epsilon``.
    The returned model is the epoch snapshot with the lowest output error.
    """
    inputs, targets = _validate_training_inputs(model, data)
    started = time.perf_counter()
    p = _Params.from_model(model)
    counters = _Counters()
    xext = _extend(inputs)
    init_digest = model_digest(model)

    st = premise_state(p.centers, p.transforms, p.shapes, inputs)
    phi = firing_strengths(st.mu)
    rule_out = xext @ p.consequents.T
    yhat = (phi * rule_out).sum(axis=1)
    e = yhat - targets

    best = p.copy()
    best_j3 = _check(0.5 * (e @ e), 0, "consequent")
    best_epoch = 0
    j1_hist, j2_hist, j3_hist, rmse_hist, degen = [], [], [], [], []
    j1 = None
    epochs_run = 0

    for epoch in range(1, cfg.iter_max + 1):
        epochs_run = epoch
        found = solve_targets(phi, rule_out, targets)
        degen.append(found.degenerate_rows)
        if j1 is None:
            j1 = _check(0.5 * ((phi - found.psi) ** 2).sum(), epoch, "activation-targets")

        st, j2_steps = _premise_phase(p, inputs, found.psi, cfg, counters, epoch)
        phi = firing_strengths(st.mu)
        rule_out, yhat, e, j3_steps = _consequent_phase(
            p, xext, targets, phi, cfg, counters, epoch)
        j3 = j3_steps[-1]

        j1_new = _check(0.5 * ((phi - found.psi) ** 2).sum(), epoch, "activation-targets")
        train_rmse = math.sqrt(2.0 * j3 / len(targets))
        j1_hist.append(j1_new)
        j2_hist.append(j2_steps[-1])
        j3_hist.append(j3)
        rmse_hist.append(train_rmse)
        if j3 < best_j3:
            best, best_j3, best_epoch = p.copy(), j3, epoch
        _emit(log_stream, epoch, j1_new, j2_steps[-1], j3, train_rmse)

        if abs(j1 - j1_new) < cfg.epsilon:
            break
        j1 = j1_new

    result = best.to_model(model.input_dim)
    report = TrainReport(
        mode="stepwise",
        epochs_run=epochs_run,
        j1_history=j1_hist,
        j2_history=j2_hist,
        j3_history=j3_hist,
        rmse_history=rmse_hist,
        degenerate_rows=degen,
        clamped_gradients=counters.clamped,
        best_epoch=best_epoch,
        final_train_rmse=_final_rmse(result, data),
        final_test_rmse=None if test_data is None else _final_rmse(result, test_data),
        wall_time_seconds=time.perf_counter() - started,
        initial_model_digest=init_digest,
    )
    return result, report


@_quiet_overflow
def train_backprop(model: Model, data, cfg: TrainConfig,
                   test_data=None, log_stream=None) -> tuple[Model, TrainReport]:
    """Train the identical architecture by plain gradient descent.

    Every epoch descends the output error with respect to all parameters at
    once (premise and consequents together, learning-rate state reset per
    epoch) until the mean error stops moving by ``delta_e``; the outer loop
    stops when successive epoch-final errors differ by less than ``epsilon``.
    """
    inputs, targets = _validate_training_inputs(model, data)
    started = time.perf_counter()
    p = _Params.from_model(model)
    counters = _Counters()
    xext = _extend(inputs)
    init_digest = model_digest(model)
    n = len(targets)

    def refresh():
        st = premise_state(p.centers, p.transforms, p.shapes, inputs)
        s = np.maximum(st.mu, ACTIVATION_FLOOR).sum(axis=1)
        phi = np.maximum(st.mu, ACTIVATION_FLOOR) / s[:, None]
        rule_out = xext @ p.consequents.T
        yhat = (phi * rule_out).sum(axis=1)
        return st, s, phi, rule_out, yhat, yhat - targets

    st, s, phi, rule_out, yhat, e = refresh()
    best = p.copy()
    best_j3 = _check(0.5 * (e @ e), 0, "backprop")
    best_epoch = 0
    j3_hist, rmse_hist = [], []
    prev_epoch_j3 = None
    epochs_run = 0

    for epoch in range(1, cfg.iter_max + 1):
        epochs_run = epoch
        lr_t = LrState.initial(p.transforms.shape, cfg.eta0)
        lr_c = LrState.initial(p.centers.shape, cfg.eta0)
        lr_s = LrState.initial(p.shapes.shape, cfg.eta0)
        lr_a = LrState.initial(p.consequents.shape, cfg.eta0)
        j3 = _check(0.5 * (e @ e), epoch, "backprop")
        for _ in range(cfg.t_max + cfg.tprime_max):
            w = e[:, None] * (rule_out - yhat[:, None]) / s[:, None]
            d_t, d_c, d_s = _premise_deltas(st, p.transforms, p.shapes, w)
            d_a = _consequent_delta(e, phi, xext)
            d_t = _clamped(d_t, counters)
            d_c = _clamped(d_c, counters)
            d_s = _clamped(d_s, counters)
            d_a = _clamped(d_a, counters)
            p.transforms += lr_t.eta * d_t
            p.centers += lr_c.eta * d_c
            p.shapes = np.clip(p.shapes + lr_s.eta * d_s,
                               SHAPE_REGULATOR_MIN, SHAPE_REGULATOR_MAX)
            p.consequents += lr_a.eta * d_a
            lr_t = lr_update(lr_t, d_t, cfg.alpha, cfg.zeta)
            lr_c = lr_update(lr_c, d_c, cfg.alpha, cfg.zeta)
            lr_s = lr_update(lr_s, d_s, cfg.alpha, cfg.zeta)
            lr_a = lr_update(lr_a, d_a, cfg.alpha, cfg.zeta)
            st, s, phi, rule_out, yhat, e = refresh()
            j3_new = _check(0.5 * (e @ e), epoch, "backprop")
            done = abs(j3 - j3_new) < cfg.delta_e
            j3 = j3_new
            if done:
                break

        train_rmse = math.sqrt(2.0 * j3 / n)
        j3_hist.append(j3)
        rmse_hist.append(train_rmse)
        if j3 < best_j3:
            best, best_j3, best_epoch = p.copy(), j3, epoch
        _emit(log_stream, epoch, None, None, j3, train_rmse)

        if prev_epoch_j3 is not None and abs(prev_epoch_j3 - j3) < cfg.epsilon:
            break
        prev_epoch_j3 = j3

    result = best.to_model(model.input_dim)
    report = TrainReport(
        mode="backprop",
        epochs_run=epochs_run,
        j1_history=[None] * epochs_run,
        j2_history=[None] * epochs_run,
        j3_history=j3_hist,
        rmse_history=rmse_hist,
        degenerate_rows=[0] * epochs_run,
        clamped_gradients=counters.clamped,
        best_epoch=best_epoch,
        final_train_rmse=_final_rmse(result, data),
        final_test_rmse=None if test_data is None else _final_rmse(result, test_data),
        wall_time_seconds=time.perf_counter() - started,
        initial_model_digest=init_digest,
    )
    return result, report


def train(model: Model, data, cfg: TrainConfig,
          test_data=None, log_stream=None) -> tuple[Model, TrainReport]:
    """Dispatch on cfg.mode."""
    if cfg.mode == "stepwise":
        return train_stepwise(model, data, cfg, test_data, log_stream)
    if cfg.mode == "backprop":
        return train_backprop(model, data, cfg, test_data, log_stream)
    raise ConfigurationError(f"unknown training mode {cfg.mode!r}")
