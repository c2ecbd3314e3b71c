"""Rule-bank parameterization and the fuzzy-inference forward pass.

A model is a bank of R fuzzy rules over n inputs.  Each rule owns a center
M (where the rule lives in input space), a full feature-mixing matrix Gamma
(so memberships can follow correlated directions instead of staying
axis-aligned), a shape regulator beta (morphs the membership profile between
flat-topped and peaked), and an affine consequent.  Inference transforms the
input relative to each rule, scores per-feature memberships, multiplies them
into a rule activation, normalizes activations into firing strengths, and
blends the per-rule affine predictions by those strengths.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError

# Activation floor keeps the normalization layer away from 0/0 when every
# rule underflows; the squared-feature floor keeps fractional powers and the
# logs in their gradients finite.  Both are far below any attainable signal.
ACTIVATION_FLOOR = 1e-300
SQUARED_FEATURE_FLOOR = 1e-300

# Practical range for the shape regulator; training clamps back into it.
SHAPE_REGULATOR_MIN = 0.1
SHAPE_REGULATOR_MAX = 10.0

MODEL_FORMAT_VERSION = 1


@dataclass
class RuleParams:
    """Parameters of one fuzzy rule.

    center : (n,) rule location in input space.
    transform : (n, n) feature-mixing matrix; row l builds mixed feature l.
    shape_regulator : positive exponent controlling the membership profile.
    consequent : (n + 1,) affine output coefficients, index 0 is the bias.
    """

    center: np.ndarray
    transform: np.ndarray
    shape_regulator: float
    consequent: np.ndarray

    def __post_init__(self) -> None:
        self.center = np.array(self.center, dtype=float)
        self.transform = np.array(self.transform, dtype=float)
        self.shape_regulator = float(self.shape_regulator)
        self.consequent = np.array(self.consequent, dtype=float)

    def validate(self, input_dim: int) -> None:
        n = input_dim
        if self.center.shape != (n,):
            raise ConfigurationError(
                f"rule center has shape {self.center.shape}, expected ({n},)")
        if self.transform.shape != (n, n):
            raise ConfigurationError(
                f"rule transform has shape {self.transform.shape}, expected ({n}, {n})")
        if self.consequent.shape != (n + 1,):
            raise ConfigurationError(
                f"rule consequent has shape {self.consequent.shape}, expected ({n + 1},)")
        if not np.isfinite(self.center).all():
            raise ConfigurationError("rule center contains non-finite values")
        if not np.isfinite(self.transform).all():
            raise ConfigurationError("rule transform contains non-finite values")
        if not np.isfinite(self.consequent).all():
            raise ConfigurationError("rule consequent contains non-finite values")
        if not (np.isfinite(self.shape_regulator) and self.shape_regulator > 0):
            raise ConfigurationError(
                f"shape regulator must be a positive finite number, got {self.shape_regulator}")


@dataclass
class Model:
    """A bank of fuzzy rules over a fixed input dimension."""

    input_dim: int
    rules: list[RuleParams] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.validate()

    @property
    def n_rules(self) -> int:
        return len(self.rules)

    def validate(self) -> None:
        if self.input_dim < 1:
            raise ConfigurationError(f"input_dim must be >= 1, got {self.input_dim}")
        if not self.rules:
            raise ConfigurationError("model must contain at least one rule")
        for rule in self.rules:
            rule.validate(self.input_dim)


def parameter_count(model: Model) -> int:
    """Number of free scalars: per rule one beta, n center entries, n*n
    transform entries, and n+1 consequent coefficients."""
    n, r = model.input_dim, model.n_rules
    return r * (2 + 2 * n + n * n)


class PremiseState(NamedTuple):
    """Batch premise quantities reused by the forward pass and gradients.

    All arrays are (N, R, n) except ``mu`` which is (N, R).  ``z2`` is the
    floored squared mixed feature, ``powed`` is z2**beta, and ``mu`` is the
    raw (unfloored) rule activation.
    """

    diff: np.ndarray
    z: np.ndarray
    z2: np.ndarray
    log_z2: np.ndarray
    powed: np.ndarray
    mu: np.ndarray


def premise_state(centers: np.ndarray, transforms: np.ndarray,
                  shapes: np.ndarray, inputs: np.ndarray) -> PremiseState:
    """Evaluate the premise side for a batch.

    centers (R, n), transforms (R, n, n), shapes (R,), inputs (N, n).
    """
    diff = inputs[:, None, :] - centers[None, :, :]               # (N, R, n)
    z = np.einsum("rlj,krj->krl", transforms, diff)               # (N, R, n)
    z2 = np.maximum(z * z, SQUARED_FEATURE_FLOOR)
    log_z2 = np.log(z2)
    powed = np.exp(shapes[None, :, None] * log_z2)                # (z^2)^beta
    mu = np.exp(-0.5 * powed.sum(axis=2))                         # (N, R)
    return PremiseState(diff=diff, z=z, z2=z2, log_z2=log_z2, powed=powed, mu=mu)


def firing_strengths(mu: np.ndarray) -> np.ndarray:
    """Normalize rule activations into a partition of unity, (.., R) -> same."""
    floored = np.maximum(mu, ACTIVATION_FLOOR)
    return floored / floored.sum(axis=-1, keepdims=True)


def transform_inputs(rule: RuleParams, x: np.ndarray) -> np.ndarray:
    """Mixed feature vector z = Gamma (x - M) for one rule and one input."""
    x = np.asarray(x, dtype=float)
    return rule.transform @ (x - rule.center)


def membership(z, beta: float):
    """Per-feature membership exp(-0.5 * (z^2)^beta), elementwise in z.

    Equals 1 at z = 0 for any beta (the squared-feature floor makes the
    fractional power vanish there) and decreases toward 0 as |z| grows.
    """
    z = np.asarray(z, dtype=float)
    z2 = np.maximum(z * z, SQUARED_FEATURE_FLOOR)
    out = np.exp(-0.5 * np.exp(beta * np.log(z2)))
    return out if out.ndim else float(out)


def _stack_premise(model: Model):
    centers = np.stack([r.center for r in model.rules])
    transforms = np.stack([r.transform for r in model.rules])
    shapes = np.array([r.shape_regulator for r in model.rules])
    return centers, transforms, shapes


def _stack_consequents(model: Model) -> np.ndarray:
    return np.stack([r.consequent for r in model.rules])


@dataclass
class ForwardTrace:
    """Every intermediate quantity of one forward evaluation.

    Arrays are per-rule for a single input: z and dim_memberships are
    (R, n); rule_activation, firing_strength, rule_output, weighted_output
    are (R,).  rule_activation is the raw product of per-feature
    memberships and can underflow to 0; firing strengths are computed from
    floored activations and always sum to 1.
    """

    inputs: np.ndarray
    z: np.ndarray
    dim_memberships: np.ndarray
    rule_activation: np.ndarray
    firing_strength: np.ndarray
    rule_output: np.ndarray
    weighted_output: np.ndarray
    output: float


@dataclass
class BatchTrace:
    """Forward trace for a whole batch; leading axis is the instance."""

    inputs: np.ndarray
    z: np.ndarray
    dim_memberships: np.ndarray
    rule_activation: np.ndarray
    firing_strength: np.ndarray
    rule_output: np.ndarray
    weighted_output: np.ndarray
    output: np.ndarray


def forward_batch(model: Model, inputs: np.ndarray) -> BatchTrace:
    """Run the full forward pass on inputs of shape (N, input_dim)."""
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2 or inputs.shape[1] != model.input_dim:
        raise ConfigurationError(
            f"inputs have shape {inputs.shape}, expected (N, {model.input_dim})")
    centers, transforms, shapes = _stack_premise(model)
    consequents = _stack_consequents(model)
    st = premise_state(centers, transforms, shapes, inputs)
    phi = firing_strengths(st.mu)
    rule_output = inputs @ consequents[:, 1:].T + consequents[None, :, 0]
    weighted = phi * rule_output
    return BatchTrace(
        inputs=inputs,
        z=st.z,
        dim_memberships=np.exp(-0.5 * st.powed),
        rule_activation=st.mu,
        firing_strength=phi,
        rule_output=rule_output,
        weighted_output=weighted,
        output=weighted.sum(axis=1),
    )


def forward(model: Model, x: np.ndarray) -> ForwardTrace:
    """Run the forward pass on a single input vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.input_dim,):
        raise ConfigurationError(
            f"input has shape {x.shape}, expected ({model.input_dim},)")
    b = forward_batch(model, x[None, :])
    return ForwardTrace(
        inputs=x,
        z=b.z[0],
        dim_memberships=b.dim_memberships[0],
        rule_activation=b.rule_activation[0],
        firing_strength=b.firing_strength[0],
        rule_output=b.rule_output[0],
        weighted_output=b.weighted_output[0],
        output=float(b.output[0]),
    )


def predict(model: Model, inputs: np.ndarray) -> np.ndarray:
    """Model outputs for a batch, without keeping intermediates."""
    return forward_batch(model, inputs).output


def init_random(input_dim: int, n_rules: int, seed: int,
                feature_range: tuple[np.ndarray, np.ndarray] | None = None) -> Model:
    """Draw a fresh model.

    Centers are uniform over the per-dimension feature range (default
    [-1, 1] per dimension); transforms start near the identity, shape
    regulators at 1 (plain Gaussian profile), consequents near zero.
    """
    if input_dim < 1:
        raise ConfigurationError(f"input_dim must be >= 1, got {input_dim}")
    if n_rules < 1:
        raise ConfigurationError(f"n_rules must be >= 1, got {n_rules}")
    rng = np.random.default_rng(seed)
    if feature_range is None:
        lo = np.full(input_dim, -1.0)
        hi = np.full(input_dim, 1.0)
    else:
        lo = np.asarray(feature_range[0], dtype=float)
        hi = np.asarray(feature_range[1], dtype=float)
        if lo.shape != (input_dim,) or hi.shape != (input_dim,):
            raise ConfigurationError("feature_range bounds must have shape (input_dim,)")
    rules = []
    for _ in range(n_rules):
        center = rng.uniform(lo, hi)
        transform = np.eye(input_dim) + rng.uniform(-0.05, 0.05, (input_dim, input_dim))
        consequent = rng.uniform(-0.1, 0.1, input_dim + 1)
        rules.append(RuleParams(center=center, transform=transform,
                                shape_regulator=1.0, consequent=consequent))
    return Model(input_dim=input_dim, rules=rules)


def model_to_dict(model: Model) -> dict:
    return {
        "version": MODEL_FORMAT_VERSION,
        "input_dim": model.input_dim,
        "rules": [
            {
                "center": rule.center.tolist(),
                "transform": rule.transform.tolist(),
                "shape_regulator": rule.shape_regulator,
                "consequent": rule.consequent.tolist(),
            }
            for rule in model.rules
        ],
    }


def model_from_dict(payload: dict) -> Model:
    if not isinstance(payload, dict):
        raise ConfigurationError("model document must be a JSON object")
    missing = {"version", "input_dim", "rules"} - payload.keys()
    if missing:
        raise ConfigurationError(f"model document missing keys: {sorted(missing)}")
    if payload["version"] != MODEL_FORMAT_VERSION:
        raise ConfigurationError(
            f"unsupported model format version {payload['version']!r}")
    try:
        rules = [
            RuleParams(
                center=entry["center"],
                transform=entry["transform"],
                shape_regulator=entry["shape_regulator"],
                consequent=entry["consequent"],
            )
            for entry in payload["rules"]
        ]
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed rule entry in model document: {exc}") from exc
    return Model(input_dim=int(payload["input_dim"]), rules=rules)


def save_model(model: Model, path) -> None:
    """Write the model as JSON; float repr round-trips every double exactly."""
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n")


def load_model(path) -> Model:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read model file {path}: {exc}") from exc
    return model_from_dict(payload)


def model_digest(model: Model) -> str:
    """Stable content hash, used to assert two runs started identically."""
    canon = json.dumps(model_to_dict(model), sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()
