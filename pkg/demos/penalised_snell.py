"""Penalised equation above the obstacle V = 1 - t with zero terminal value.

The limit is Y = V with K_T = 1; the printed ladder shows Y^n climbing onto
the obstacle and the Skorokhod residual shrinking as n grows.

Run: python3 demos/penalised_snell.py
"""
import numpy as np

from bdsoc import (ControlPolicy, RegressionBasis, TimeGrid, build_environment, get_model, penalty_ladder,
                   simulate_forward)

spec = get_model("zero")
env = build_environment(TimeGrid(0.0, 1.0, 50), 500, (1, 1), master_seed=1, b_seed=2)
ens = simulate_forward(spec.model, env, (0, np.array([0.0])), ControlPolicy.constant(spec.controls, 0))
obstacle = lambda t, x: np.full(x.shape[0], 1.0 - t)

rep = penalty_ladder(spec.model, env, ens, RegressionBasis(), obstacle, [2.0 ** k for k in range(11)])
print(f"{'n':>6} {'Y0':>8} {'K_T':>8} {'max(Y-V)^-':>11} {'Skorokhod':>10}")
for lv in rep.levels:
    print(f"{lv.n:6.0f} {lv.y0:8.4f} {lv.k_end:8.4f} {lv.max_negative_part:11.2e} {lv.skorokhod:10.2e}")
print(f"extrapolated: Y0 -> {rep.y0_limit:.4f}, K_T -> {rep.k_end_limit:.4f}")
