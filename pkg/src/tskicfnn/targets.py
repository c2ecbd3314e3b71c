"""Closed-form desired rule activations.

For each training instance the current firing strengths phi are projected
onto the hyperplane of activation vectors whose blended rule outputs hit the
observed target exactly.  Minimizing the squared distance to phi subject to
that single linear constraint has the closed form

    lam = (sum_i phi_i y_i - y_star) / sum_i y_i**2
    psi_i = phi_i - lam * y_i

where y_i are the (fixed) per-rule affine outputs.  psi is the Euclidean
projection of phi onto the constraint plane, so it is exact, unique, and as
close to the current activations as the constraint allows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

# When every rule output is essentially zero the constraint plane is empty
# (no activation vector can reach a nonzero target); such rows keep psi = phi.
DEGENERATE_OUTPUT_THRESHOLD = 1e-12


@dataclass
class PremiseTargets:
    """Desired activations psi (N, R), multipliers (N,), degenerate-row count."""

    psi: np.ndarray
    lagrange: np.ndarray
    degenerate_rows: int


def solve_targets(firing_strength: np.ndarray, rule_output: np.ndarray,
                  targets: np.ndarray) -> PremiseTargets:
    """Per-row closed-form projection of firing strengths onto the target plane.

    firing_strength and rule_output are (N, R); targets is (N,).  Rows where
    sum_i rule_output**2 falls below the degeneracy threshold are left at
    psi = phi with a zero multiplier and counted.
    """
    phi = np.asarray(firing_strength, dtype=float)
    y = np.asarray(rule_output, dtype=float)
    t = np.asarray(targets, dtype=float)
    if phi.shape != y.shape or phi.ndim != 2:
        raise DataError(
            f"firing strengths {phi.shape} and rule outputs {y.shape} must share shape (N, R)")
    if t.shape != (phi.shape[0],):
        raise DataError(
            f"targets have shape {t.shape}, expected ({phi.shape[0]},)")

    denom = np.einsum("kr,kr->k", y, y)
    degenerate = denom < DEGENERATE_OUTPUT_THRESHOLD
    safe_denom = np.where(degenerate, 1.0, denom)
    lam = ((phi * y).sum(axis=1) - t) / safe_denom
    lam = np.where(degenerate, 0.0, lam)
    psi = phi - lam[:, None] * y
    return PremiseTargets(psi=psi, lagrange=lam,
                          degenerate_rows=int(degenerate.sum()))
