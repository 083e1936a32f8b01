"""Recursive optimal control driven by backward doubly stochastic differential equations.

Forward state simulation, regression solvers for the backward doubly
stochastic equation (plain and penalised), dynamic programming for the value
function and numerical certificates that the value function is a Sobolev
weak solution of the stochastic HJB equation.
"""
from .bdsde import (BdsdeSolution, backward_step, check_comparison, check_stability, penalty_ladder, solve_bdsde,
                    solve_penalized)
from .control import (ValueField, backward_semigroup, check_continuity, check_dpp, compare_backends,
                      extract_epsilon_optimal, solve_value_function)
from .model import (BrownianEnvironment, CoefficientSet, ControlSet, SpaceGrid, TimeGrid, WeightFunction,
                    build_environment, refine_environment, validate_model)
from .regression import RegressionBasis
from .registry import get_model, model_names
from .sde import (ControlPolicy, PathEnsemble, check_flow_stability, check_moment_bounds, fit_growth_exponent,
                  simulate_forward)
from .weak import (TestFunction, check_adjoint_identity, check_norm_equivalence,
                   check_supersolution_representation, check_weak_inequalities, default_battery, weighted_norms)

__version__ = "0.1.0"
