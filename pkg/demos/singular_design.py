"""A rank-one design keeps simplified dropout from ever concentrating.

For X = 𝟏ᵀ the second moment of the iterates stays of the form ν_k I + (λ_k/d)𝕏
and ν_k never drops below α²p(1−p), so the covariance has a floor.
"""

import numpy as np

from dropout_linreg.dynamics import SchemeConfig
from dropout_linreg.matrix_core import spectral_norm
from dropout_linreg.model import LinearModel
from dropout_linreg.montecarlo import EnsembleConfig, run_ensemble
from dropout_linreg.operators import singular_design_floor, singular_design_recursion

alpha, p, k = 0.1, 0.5, 100
for d in (2, 5):
    nu, lam = singular_design_recursion(alpha, p, d, k)
    floor = singular_design_floor(alpha, p, d)
    model = LinearModel(np.ones((1, d)), np.zeros(d))
    sc = SchemeConfig("simplified_dropout", alpha, p, k_max=k, seed=3, checkpoints=(k,))
    stats = run_ensemble(EnsembleConfig(model, sc, 20_000))
    val, se = stats.jackknife(k, lambda acc: spectral_norm(acc.covariance()), "diff")
    print(f"d={d}: floor {floor:.4f}  ν_1={nu[1]:.4f}  ν_{k}={nu[k]:.4f}  "
          f"MC ‖Cov(β_k − β̂)‖ = {float(val):.4f} ± {float(se):.4f}")
