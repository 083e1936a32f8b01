"""Value function of the controlled-drift model for one B-path, then its weak-solution certificate.

Run: python3 demos/value_and_certificate.py
"""
import numpy as np

from bdsoc import (SpaceGrid, TimeGrid, build_environment, check_dpp, check_weak_inequalities, default_battery,
                   extract_epsilon_optimal, get_model, solve_value_function)
from bdsoc.weak import calibrate_weak_tolerance

spec = get_model("controlled-drift-lq")
env = build_environment(TimeGrid(0.0, 1.0, 50), 2000, (1, 1), master_seed=7, b_seed=11)
grid = SpaceGrid.uniform(1, 3.0, 601)

field = solve_value_function(spec.model, env, grid, spec.controls)
print(f"u(0, 0) = {field.at(0, [0.0]):.4f}, u(0, 1) = {field.at(0, [1.0]):.4f}")

# dynamic programming: u(t, x) against the best one-window semigroup
dpp = check_dpp(field, env, spec.model, [1, 5, 10], [(0, [0.0]), (20, [0.5])])
print(f"DPP max residual {dpp.max_residual:.2e}, passed {dpp.passed}")

# a feedback control read off the argmax, re-simulated
cert = extract_epsilon_optimal(field, spec.model, env, (0, np.array([0.0])), 0.05)
print(f"feedback policy gap {cert.gap:.2e} +- {cert.std_error:.1e}, certified {cert.certified}")

# weak inequalities against the Gaussian battery of test functions
tests = default_battery()
c_ref = calibrate_weak_tolerance(spec.model, env, grid, spec.controls, tests, refine_seed=7)
rep = check_weak_inequalities(field, spec.model, env, tests, 0.05, c_ref)
print(f"min margin {rep.min_margin:.2e} (tolerance {rep.tol:.2e}); certificate passed {rep.passed}")
