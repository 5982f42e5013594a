"""Dropout iterates settle around the marginalized minimizer with a nonzero spread.

Runs the d=2 reference problem, computes the stationary excess covariance V
three ways and tracks the Monte Carlo covariance of β_k − β̃ towards it.
Averaging the iterates (Ruppert–Polyak) removes the excess at rate 1/k.
"""

import warnings

import numpy as np

from dropout_linreg.dynamics import SchemeConfig
from dropout_linreg.errors import TheoremGateWarning
from dropout_linreg.matrix_core import spectral_norm
from dropout_linreg.model import LinearModel
from dropout_linreg.montecarlo import EnsembleConfig, run_ensemble
from dropout_linreg.operators import (
    SOperator,
    exact_moment_path,
    fixed_point_by_iteration,
    fixed_point_direct,
    fixed_point_excess_cov,
    theorem_gate,
)

warnings.simplefilter("ignore", TheoremGateWarning)

X = np.array([[1.0, 1.0], [0.0, 1.0]])
model = LinearModel(X, [1.0, -1.0])
alpha, p = 0.05, 0.5
op = SOperator(model, alpha, p)

V = fixed_point_excess_cov(op)
print("fixed point V (Neumann):\n", V)
print("max diff to iteration / direct solve:",
      np.max(np.abs(V - fixed_point_by_iteration(op))), np.max(np.abs(V - fixed_point_direct(op))))
print(f"step size {alpha} vs covariance-theorem gate {theorem_gate(op):.4f}")

checkpoints = (10, 50, 100, 200, 500)
sc = SchemeConfig("dropout", alpha, p, k_max=500, seed=1, checkpoints=checkpoints)
stats = run_ensemble(EnsembleConfig(model, sc, 20_000))
gaps, As, _ = exact_moment_path(op, [0.0, 0.0], 500)

print(f"\n{'k':>4} {'‖MC cov − V‖':>14} {'‖exact − V‖':>14} {'‖RP 2nd moment‖':>16}")
for k in checkpoints:
    s = stats.summary(k, "diff")
    exact = As[k] - np.outer(gaps[k], gaps[k])
    rp = stats.summary(k, "rp_diff").second_moment
    print(f"{k:>4} {spectral_norm(s.covariance - V):>14.5f} {spectral_norm(exact - V):>14.5f} "
          f"{spectral_norm(rp):>16.5f}")
