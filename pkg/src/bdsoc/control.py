"""Value function by backward dynamic programming, the DPP check and continuity moduli.

Two backends share the one-step scheme of :func:`bdsoc.bdsde.backward_step`
and differ only in how the one-step W-expectation is taken:

``grid-DP``
    Gauss-Hermite quadrature on a tensor grid with multilinear interpolation
    of the next-step values (state dimension <= 2).
``regression-MC``
    Every node is a stratum whose samples all start at the node and move with
    the environment's forward increments; regression on the node indicator
    basis is the stratum mean.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .bdsde import backward_step, solve_bdsde
from .model import BrownianEnvironment, CoefficientSet, ControlSet, SpaceGrid, TimeGrid
from .regression import RegressionBasis
from .sde import ControlPolicy, simulate_forward
from .stats import loglog_slope

BACKENDS = ("grid-DP", "regression-MC")


def multilinear(grid: SpaceGrid, values: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of node ``values``; linear extrapolation outside the box."""
    x = np.asarray(x, dtype=float).reshape(-1, grid.dim)
    interp = RegularGridInterpolator(grid.axes, np.asarray(values, dtype=float).reshape(grid.shape),
                                     method="linear", bounds_error=False, fill_value=None)
    return interp(x)


@dataclass(frozen=True)
class ValueField:
    values: np.ndarray  # (n_steps + 1, *grid.shape)
    argmax: np.ndarray  # same shape; the terminal row is 0
    grid: SpaceGrid
    time_grid: TimeGrid
    controls: ControlSet
    b_seed: int
    backend: str
    model_name: str = ""
    std_error: Optional[np.ndarray] = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("value field has non-finite entries")
        if np.any(self.argmax < 0) or np.any(self.argmax >= len(self.controls)):
            raise ValueError("argmax index outside the control set")

    def __call__(self, i: int, x: np.ndarray) -> np.ndarray:
        return multilinear(self.grid, self.values[i], x)

    def at(self, i: int, x) -> float:
        return float(self(i, np.atleast_2d(np.asarray(x, dtype=float)))[0])

    def interpolator(self, i: int):
        return lambda x: self(i, x)

    def obstacle(self):
        """The field as a callable of ``(t, x)`` on its own time grid."""
        times = self.time_grid.times

        def fn(t, x):
            i = int(np.argmin(np.abs(times - t)))
            return self(i, x)
        return fn

    def policy(self) -> ControlPolicy:
        return ControlPolicy.feedback(self.controls, self.argmax[:-1], self.grid)

    def gradient(self, i: int) -> np.ndarray:
        """Central differences (one-sided at the boundary), shape (dim, *grid.shape)."""
        vals = self.values[i]
        if self.grid.dim == 1:
            return np.gradient(vals, self.grid.spacing[0], edge_order=1)[None]
        return np.stack(np.gradient(vals, *self.grid.spacing, edge_order=1))


def gauss_hermite(d: int, q: int):
    """Tensor Gauss-Hermite rule for a standard normal in ``d`` dimensions."""
    x, w = np.polynomial.hermite_e.hermegauss(q)
    w = w / w.sum()
    mesh = np.meshgrid(*([x] * d), indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    weights = np.ones(1)
    for _ in range(d):
        weights = np.multiply.outer(weights, w).ravel()
    return nodes, weights


def _group_expect(weights, groups):
    q = weights.shape[0]

    def expect(t):
        t = np.asarray(t)
        shaped = t.reshape((groups, q) + t.shape[1:])
        mean = np.tensordot(weights, shaped, axes=([0], [1]))
        return np.repeat(mean, q, axis=0)
    return expect


def _one_step_all_nodes(model, field_next, grid, t, dt, v, shocks, weights, db):
    """One backward step from every node under the constant control ``v``.

    ``shocks`` are forward increments (q, d) shared by all nodes. Returns the
    node values and the per-node spread of the regression targets.
    """
    nodes = grid.points
    j, q = nodes.shape[0], shocks.shape[0]
    vj = np.broadcast_to(v, (j, v.shape[-1]))
    drift = np.asarray(model.b(t, nodes, vj)).reshape(j, model.n)
    vol = np.asarray(model.sigma(t, nodes, vj)).reshape(j, model.n, model.d)
    nxt = nodes[:, None, :] + drift[:, None, :] * dt + np.einsum("jnd,qd->jqn", vol, shocks)
    s = j * q
    xs = np.repeat(nodes, q, axis=0)
    vs = np.repeat(vj, q, axis=0)
    y_next = multilinear(grid, field_next, nxt.reshape(s, model.n))
    dw = np.tile(shocks, (j, 1))
    a, _, target = backward_step(model, t, dt, xs, y_next, dw, db, vs, _group_expect(weights, j))
    a = a.reshape(j, q)[:, 0]
    spread = target.reshape(j, q)
    return a, spread


def solve_value_function(model: CoefficientSet, env: BrownianEnvironment, grid: SpaceGrid,
                         controls: ControlSet, backend: str = "grid-DP", gh_nodes: int = 5) -> ValueField:
    """Backward recursion u(t_i, x) = max_v G_{t_i, t_i+dt}[u(t_{i+1}, .)](x, v).

    Ties go to the lowest control index.
    """
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    if grid.dim != model.n:
        raise ValueError("space grid dimension differs from the state dimension")
    if backend == "grid-DP" and grid.dim > 2:
        raise ValueError("grid-DP is limited to state dimension <= 2")
    tg = env.grid
    n, dt = tg.n_steps, tg.dt
    times = tg.times
    values = np.empty((n + 1,) + grid.shape)
    argmax = np.zeros((n + 1,) + grid.shape, dtype=np.int64)
    values[-1] = np.asarray(model.h(grid.points), dtype=float).reshape(grid.shape)
    se = np.zeros((n + 1,) + grid.shape) if backend == "regression-MC" else None
    if backend == "grid-DP":
        std_nodes, weights = gauss_hermite(model.d, gh_nodes)
    for i in range(n - 1, -1, -1):
        if backend == "grid-DP":
            shocks = std_nodes * np.sqrt(dt)
        else:
            shocks = env.w_increments[:, i]
            weights = np.full(shocks.shape[0], 1.0 / shocks.shape[0])
        best = np.full(grid.size, -np.inf)
        best_idx = np.zeros(grid.size, dtype=np.int64)
        best_se = np.zeros(grid.size)
        for c in range(len(controls)):
            a, spread = _one_step_all_nodes(model, values[i + 1], grid, times[i], dt, controls.points[c],
                                            shocks, weights, env.b_increments[i])
            better = a > best
            best = np.where(better, a, best)
            best_idx = np.where(better, c, best_idx)
            if se is not None:
                step_se = np.std(spread, axis=1, ddof=1) / np.sqrt(spread.shape[1])
                best_se = np.where(better, step_se, best_se)
        if not np.all(np.isfinite(best)):
            raise FloatingPointError(f"non-finite value at step {i}")
        values[i] = best.reshape(grid.shape)
        argmax[i] = best_idx.reshape(grid.shape)
        if se is not None:
            # independent per-step errors along the node, combined in quadrature
            se[i] = np.sqrt(best_se.reshape(grid.shape) ** 2 + se[i + 1] ** 2)
    return ValueField(values, argmax, grid, tg, controls, env.b_seed, backend, model.name, se)


def _policy_for(controls, control):
    if isinstance(control, ControlPolicy):
        return control
    return ControlPolicy.constant(controls, int(control))


def semigroup(model: CoefficientSet, env: BrownianEnvironment, start: tuple, delta_steps: int,
              terminal_field, control, controls: ControlSet,
              basis: RegressionBasis = RegressionBasis()) -> tuple:
    """``(value, standard error)`` of the backward semigroup over ``delta_steps`` steps."""
    t_index, x = start
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if delta_steps < 0 or t_index + delta_steps > env.grid.n_steps:
        raise ValueError("semigroup window leaves the time grid")
    if delta_steps == 0:
        return float(np.asarray(terminal_field(x[None]))[0]), 0.0
    policy = _policy_for(controls, control)
    ens = simulate_forward(model, env, (t_index, x), policy, stop_index=t_index + delta_steps)
    sol = solve_bdsde(model, env, ens, basis, terminal=terminal_field)
    return sol.y0, sol.std_error


def backward_semigroup(model: CoefficientSet, env: BrownianEnvironment, start: tuple, delta_steps: int,
                       terminal_field, control, controls: ControlSet,
                       basis: RegressionBasis = RegressionBasis()) -> float:
    """Y at ``t`` of the equation on ``[t, t + delta]`` with terminal ``terminal_field(X_{t+delta})``.

    ``control`` is a control index (held constant) or a ``ControlPolicy``. The
    forward paths restart from ``x`` and reuse the environment's increments
    over the window, including its B-path segment.
    """
    return semigroup(model, env, start, delta_steps, terminal_field, control, controls, basis)[0]


@dataclass
class DppRow:
    t_index: int
    x: tuple
    delta_steps: int
    u: float
    best: float
    best_control: str
    residual: float
    std_error: float
    tol: float
    passed: bool


@dataclass
class DppReport:
    rows: list
    one_step_error: float
    passed: bool

    @property
    def max_residual(self) -> float:
        return max(r.residual for r in self.rows)


def check_dpp(field: ValueField, env: BrownianEnvironment, model: CoefficientSet,
              delta_steps: Sequence[int], probes: Sequence[tuple],
              basis: RegressionBasis = RegressionBasis(), n_se: float = 3.0,
              abs_floor: float = 1e-12) -> DppReport:
    """Residuals ``|u(t,x) - max_v G_{t,t+delta}[u(t+delta, .)](x, v)|`` at probe points.

    The maximum runs over the constant controls and the field's own feedback
    control. The tolerance is the measured one-step residual times the number
    of steps plus ``n_se`` standard errors. The one-step residual is taken at
    each probe and at the probe shifted by half a cell, where interpolation
    error of the field is largest; at a node alone it would hide that error.
    """
    grid = field.grid
    for t_index, x in probes:
        x = np.atleast_1d(x)
        if not 0 <= t_index < field.time_grid.n_steps:
            raise ValueError(f"probe time index {t_index} outside the grid")
        if np.any(x <= np.array(grid.lower)) or np.any(x >= np.array(grid.upper)):
            raise ValueError(f"probe {x} is not inside the grid interior")
    candidates = [(str(c), c) for c in range(len(field.controls))] + [("feedback", field.policy())]

    def evaluate(t_index, x, k):
        u = field.at(t_index, x)
        best, tag, best_se = -np.inf, "", 0.0
        for name, ctrl in candidates:
            val, se = semigroup(model, env, (t_index, x), k, field.interpolator(t_index + k), ctrl,
                                field.controls, basis)
            if val > best:
                best, tag, best_se = val, name, se
        return u, best, tag, best_se

    one_step = 0.0
    half = 0.5 * grid.spacing
    for t_index, x in probes:
        for shift in (0.0, 1.0):
            u, best, _, _ = evaluate(t_index, np.atleast_1d(x) + shift * half, 1)
            one_step = max(one_step, abs(u - best))
    rows = []
    for t_index, x in probes:
        for k in delta_steps:
            if t_index + k > field.time_grid.n_steps:
                raise ValueError(f"window of {k} steps from index {t_index} leaves the grid")
            u, best, tag, se = evaluate(t_index, x, k)
            tol = one_step * k + n_se * se + abs_floor
            res = abs(u - best)
            rows.append(DppRow(t_index, tuple(np.atleast_1d(x).tolist()), k, u, best, tag, res, se, tol,
                               bool(res <= tol)))
    return DppReport(rows, one_step, all(r.passed for r in rows))


@dataclass
class EpsilonCertificate:
    policy: ControlPolicy
    value: float
    achieved: float
    std_error: float
    gap: float
    epsilon: float
    certified: bool


def extract_epsilon_optimal(field: ValueField, model: CoefficientSet, env: BrownianEnvironment,
                            start: tuple, epsilon: float, basis: RegressionBasis = RegressionBasis(),
                            n_se: float = 3.0) -> EpsilonCertificate:
    """Feedback policy read off the argmax, certified by re-simulation.

    Certified when the gap ``u - J`` plus ``n_se`` standard errors is at most
    ``epsilon``; the achieved gap is reported either way.
    """
    t_index, x = start
    policy = field.policy()
    ens = simulate_forward(model, env, (t_index, np.atleast_1d(x)), policy)
    sol = solve_bdsde(model, env, ens, basis)
    u = field.at(t_index, x)
    gap = u - sol.y0
    se = sol.std_error
    return EpsilonCertificate(policy, u, sol.y0, se, gap, epsilon, bool(gap + n_se * se <= epsilon))


@dataclass
class ContinuityReport:
    x_offsets: list
    x_mean_sq: list
    x_slope: float
    t_offsets: list
    t_mean_sq: list
    t_slope: float
    rel_tol: float
    passed: bool


def _slope_ok(scales, values, rel_tol, mode):
    values = np.asarray(values)
    if np.all(values <= 1e-28):
        return float("nan"), True
    slope = loglog_slope(scales, values)
    if mode == "bound":
        return slope, bool(np.isfinite(slope) and slope >= 1.0 - rel_tol)
    return slope, bool(np.isfinite(slope) and abs(slope - 1.0) <= rel_tol)


def check_continuity(model: CoefficientSet, time_grid: TimeGrid, grid: SpaceGrid, controls: ControlSet,
                     b_seeds: Sequence[int], x, x_offsets: Sequence[float], t_index: int,
                     t_offsets: Sequence[int], gh_nodes: int = 5, rel_tol: float = 0.25,
                     fields: Optional[list] = None, x_t=None, mode: str = "sharp") -> ContinuityReport:
    """Mean-square moduli of u over B-realisations.

    ``E|u(t,x) - u(t,x')|^2`` is fitted against ``|x - x'|^2`` and
    ``E|u(t,x) - u(t',x)|^2`` against ``|t - t'|``; both slopes should be 1.
    ``t_offsets`` are in grid steps. The time ladder sits at ``x_t``
    (default ``x``).

    ``mode="sharp"`` wants both slopes within ``rel_tol`` of 1. ``mode="bound"``
    only wants them at least ``1 - rel_tol``: a smoother field (no B-noise, so
    squared time differences of order dt^2) satisfies the Hoelder bound
    without showing its exponent.
    """
    if mode not in ("sharp", "bound"):
        raise ValueError(f"unknown mode {mode!r}")
    if len(x_offsets) < 2 or len(t_offsets) < 2:
        raise ValueError("continuity ladders need at least two points")
    if any(o == 0 for o in x_offsets) or any(o == 0 for o in t_offsets):
        raise ValueError("degenerate ladder: zero offset")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    direction = np.ones_like(x) / np.sqrt(x.size)
    x_t = x if x_t is None else np.atleast_1d(np.asarray(x_t, dtype=float))
    if fields is None:
        from .model import build_environment
        fields = [solve_value_function(model, build_environment(time_grid, 1, (model.d, model.l), 0, s),
                                       grid, controls, "grid-DP", gh_nodes) for s in b_seeds]
    xs, ts = [], []
    for eps in x_offsets:
        xs.append(float(np.mean([(f.at(t_index, x) - f.at(t_index, x + eps * direction)) ** 2 for f in fields])))
    for k in t_offsets:
        if t_index + k > time_grid.n_steps:
            raise ValueError("time ladder leaves the grid")
        ts.append(float(np.mean([(f.at(t_index, x_t) - f.at(t_index + k, x_t)) ** 2 for f in fields])))
    x_scale = [e ** 2 for e in x_offsets]
    t_scale = [k * time_grid.dt for k in t_offsets]
    xslope, xok = _slope_ok(x_scale, xs, rel_tol, mode)
    tslope, tok = _slope_ok(t_scale, ts, rel_tol, mode)
    return ContinuityReport(list(x_offsets), xs, xslope, t_scale, ts, tslope, rel_tol, bool(xok and tok))


@dataclass
class BackendReport:
    u_grid: float
    u_mc: float
    std_error: float
    quadrature_budget: float
    space_budget: float
    tol: float
    passed: bool


def compare_backends(model: CoefficientSet, env: BrownianEnvironment, grid: SpaceGrid, controls: ControlSet,
                     x0, gh_nodes: int = 5, gh_reference: int = 41, n_se: float = 3.0) -> BackendReport:
    """Grid-DP against regression-MC at ``(t0, x0)``.

    The budget is ``n_se`` standard errors of the MC value plus the measured
    Gauss-Hermite quadrature error (``gh_nodes`` against ``gh_reference``
    nodes) plus the change under one space refinement of the grid-DP value.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    dp = solve_value_function(model, env, grid, controls, "grid-DP", gh_nodes)
    mc = solve_value_function(model, env, grid, controls, "regression-MC")
    ref = solve_value_function(model, env, grid, controls, "grid-DP", gh_reference)
    fine = solve_value_function(model, env, grid.refine(), controls, "grid-DP", gh_nodes)
    u_dp, u_mc = dp.at(0, x0), mc.at(0, x0)
    se = float(multilinear(grid, mc.std_error[0], x0[None])[0])
    quad = abs(u_dp - ref.at(0, x0))
    space = abs(u_dp - fine.at(0, x0))
    tol = n_se * se + quad + space + 1e-12
    return BackendReport(u_dp, u_mc, se, quad, space, tol, bool(abs(u_dp - u_mc) <= tol))
