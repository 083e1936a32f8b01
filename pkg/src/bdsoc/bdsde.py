"""Backward doubly stochastic equations solved by regression, plain and penalised.

The backward driver increments are read from the environment and treated as
known while stepping backward: the B-path is fixed and every conditional
expectation is a regression on the current forward state.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .model import BrownianEnvironment, CoefficientSet
from .regression import RegressionBasis
from .sde import PathEnsemble
from .stats import loglog_slope, standard_error


class BdsdeError(RuntimeError):
    pass


@dataclass(frozen=True)
class BdsdeSolution:
    y: np.ndarray  # (M, n_local + 1)
    z: np.ndarray  # (M, n_local, d)
    k: np.ndarray  # (M, n_local + 1), zero unless penalised
    penalty_level: float
    b_seed: int
    t_index: int
    pathwise: np.ndarray  # per-path unbiased estimator whose mean is y[:, 0]

    @property
    def y0(self) -> float:
        return float(np.mean(self.y[:, 0]))

    @property
    def std_error(self) -> float:
        return standard_error(self.pathwise)


def backward_step(model: CoefficientSet, t: float, dt: float, x, y_next, dw, db, v, expect):
    """One explicit step of the backward scheme.

    ``expect`` maps per-sample targets to their conditional expectations given
    the current state (same leading shape). Z is estimated once without the
    backward driver and refined once with it; the Z targets are centred by
    their own conditional mean, which leaves E[. dW | x] unchanged and removes
    most of the sampling noise. Returns ``(Y, Z, target)``.
    """
    s = y_next.shape[0]
    z0 = expect((y_next - expect(y_next))[:, None] * dw) / dt
    gdb = np.asarray(model.g(t, x, y_next, z0)).reshape(s, -1) @ db
    w = y_next + gdb
    z = expect((w - expect(w))[:, None] * dw) / dt
    gdb = np.asarray(model.g(t, x, y_next, z)).reshape(s, -1) @ db
    target = y_next + np.asarray(model.f(t, x, y_next, z, v)).reshape(s) * dt + gdb
    return expect(target), z, target


def penalize(a, obstacle, n: float, dt: float):
    """Solve ``y = a + n*dt*(y - obstacle)^-`` for y, per sample."""
    if n == 0:
        return a
    return np.where(a >= obstacle, a, (a + n * dt * obstacle) / (1.0 + n * dt))


def _terminal(model, ensemble, terminal):
    xt = ensemble.values[:, -1]
    if terminal is None:
        return np.asarray(model.h(xt), dtype=float).reshape(-1)
    if callable(terminal):
        return np.asarray(terminal(xt), dtype=float).reshape(-1)
    return np.asarray(terminal, dtype=float).reshape(-1)


def _solve(model, env, ensemble, basis, terminal, n_pen, obstacle):
    if tuple(ensemble.seeds) != env.seeds:
        raise ValueError(f"ensemble seeds {ensemble.seeds} do not match environment {env.seeds}")
    if ensemble.end_index > env.grid.n_steps:
        raise ValueError("ensemble runs past the environment grid")
    m, n_loc = ensemble.m_paths, ensemble.n_local
    d = env.d
    times = env.grid.times
    dt = env.grid.dt
    y = np.empty((m, n_loc + 1))
    z = np.zeros((m, n_loc, d))
    k = np.zeros((m, n_loc + 1))
    pushes = np.zeros((m, n_loc))
    y[:, -1] = _terminal(model, ensemble, terminal)
    if not np.all(np.isfinite(y[:, -1])):
        raise BdsdeError("non-finite terminal value")
    pathwise = y[:, -1].copy()
    for j in range(n_loc - 1, -1, -1):
        i = ensemble.t_index + j
        x = ensemble.values[:, j]
        proj = basis.projector(x)
        a, z[:, j], target = backward_step(model, times[i], dt, x, y[:, j + 1], env.w_increments[:, i],
                                           env.b_increments[i], ensemble.control_values(j), proj)
        if n_pen:
            obs = np.asarray(obstacle(times[i], x), dtype=float).reshape(m)
            y[:, j] = penalize(a, obs, n_pen, dt)
            pushes[:, j] = n_pen * np.maximum(obs - y[:, j], 0.0) * dt
        else:
            y[:, j] = a
        if not np.all(np.isfinite(y[:, j])):
            raise BdsdeError(f"non-finite Y at step {i}")
        pathwise += target - y[:, j + 1] + pushes[:, j]
    k[:, 1:] = np.cumsum(pushes, axis=1)
    return BdsdeSolution(y, z, k, float(n_pen), env.b_seed, ensemble.t_index, pathwise)


def solve_bdsde(model: CoefficientSet, env: BrownianEnvironment, ensemble: PathEnsemble,
                basis: RegressionBasis = RegressionBasis(), terminal=None) -> BdsdeSolution:
    """Backward regression scheme over the ensemble's time window.

    ``terminal`` overrides ``h(X_end)``: a callable of the end states or an
    array of per-path values.
    """
    return _solve(model, env, ensemble, basis, terminal, 0.0, None)


def solve_penalized(model: CoefficientSet, env: BrownianEnvironment, ensemble: PathEnsemble,
                    basis: RegressionBasis, obstacle: Callable, n: float, terminal=None) -> BdsdeSolution:
    """Penalised scheme with driver ``f + n (y - obstacle)^-``.

    The penalty is taken implicitly in Y so large ``n*dt`` stays stable; the
    increasing process accumulates ``n (Y_i - V_i)^- dt`` per step.
    """
    if n < 0:
        raise ValueError("penalty level must be non-negative")
    if n:
        xt = ensemble.values[:, -1]
        end_t = env.grid.time(ensemble.end_index)
        obs_t = np.asarray(obstacle(end_t, xt), dtype=float).reshape(-1)
        if np.any(obs_t > _terminal(model, ensemble, terminal) + 1e-12):
            warnings.warn("obstacle exceeds the terminal value on some paths", RuntimeWarning, stacklevel=2)
    return _solve(model, env, ensemble, basis, terminal, float(n), obstacle)


@dataclass
class PenaltyLevel:
    n: float
    y0: float
    k_end: float
    k_end_sq: float
    max_negative_part: float
    skorokhod: float


@dataclass
class PenaltyLadderReport:
    levels: list
    y0_limit: float
    k_end_limit: float
    monotone_negative_part: bool
    solutions: list


def _extrapolate(seq):
    a, b, c = (float(s) for s in seq[-3:])
    d1, d2 = b - a, c - b
    if d1 == 0 or d2 == 0 or d1 * d2 < 0:
        return c
    q = d2 / d1
    if not 0 < q < 1:
        return c
    return c + d2 * q / (1 - q)


def penalty_ladder(model: CoefficientSet, env: BrownianEnvironment, ensemble: PathEnsemble,
                   basis: RegressionBasis, obstacle: Callable,
                   levels: Sequence[float] = tuple(2.0 ** np.arange(11)), terminal=None) -> PenaltyLadderReport:
    """Penalised solutions for increasing ``n`` and their extrapolated limits.

    Limits use a geometric (Aitken-type) extrapolation of the last three levels.
    The Skorokhod residual is the path-mean of ``|sum_i (Y_i - V_i) dK_i|``.
    """
    times = env.grid.times
    report_levels, sols = [], []
    for n in levels:
        sol = solve_penalized(model, env, ensemble, basis, obstacle, n, terminal)
        obs = np.stack([np.asarray(obstacle(times[ensemble.t_index + j], ensemble.values[:, j]), dtype=float)
                        .reshape(-1) for j in range(ensemble.n_local + 1)], axis=1)
        gap = sol.y - obs
        dk = np.diff(sol.k, axis=1)
        report_levels.append(PenaltyLevel(
            n=float(n), y0=sol.y0, k_end=float(np.mean(sol.k[:, -1])),
            k_end_sq=float(np.mean(sol.k[:, -1] ** 2)),
            max_negative_part=float(np.max(np.maximum(-gap, 0.0))),
            skorokhod=float(np.mean(np.abs(np.sum(gap[:, :-1] * dk, axis=1)))),
        ))
        sols.append(sol)
    negs = [lv.max_negative_part for lv in report_levels]
    monotone = all(b <= a + 1e-12 for a, b in zip(negs, negs[1:]))
    if len(report_levels) >= 3:
        y_lim = _extrapolate([lv.y0 for lv in report_levels])
        k_lim = _extrapolate([lv.k_end for lv in report_levels])
    else:
        y_lim, k_lim = report_levels[-1].y0, report_levels[-1].k_end
    return PenaltyLadderReport(report_levels, y_lim, k_lim, monotone, sols)


@dataclass
class ComparisonReport:
    min_gap: float
    gap_at_start: float
    tol: float
    passed: bool


def check_comparison(low: CoefficientSet, high: CoefficientSet, env: BrownianEnvironment,
                     ensemble: PathEnsemble, basis: RegressionBasis = RegressionBasis(),
                     box: tuple = (-3.0, 3.0), sample_budget: int = 2000, seed: int = 0,
                     n_se: float = 3.0) -> ComparisonReport:
    """Solve both equations on shared noise and report ``min (Y' - Y)``.

    Ordered terminal values, ordered drivers and equal backward drivers are
    checked on samples first; a violation raises ``ValueError``.
    """
    xt = ensemble.values[:, -1]
    if np.any(low.h(xt) > high.h(xt) + 1e-12):
        raise ValueError("terminal values are not ordered on the ensemble")
    rng = np.random.default_rng(seed)
    m = sample_budget
    rows = rng.integers(ensemble.m_paths, size=m)
    cols = rng.integers(ensemble.n_local + 1, size=m)
    x = ensemble.values[rows, cols]
    t = float(rng.uniform(env.grid.t0, env.grid.T))
    y = rng.uniform(*box, size=m)
    zz = rng.uniform(*box, size=(m, env.d))
    v = ensemble.controls.take(rng.integers(len(ensemble.controls), size=m))
    if np.any(low.f(t, x, y, zz, v) > high.f(t, x, y, zz, v) + 1e-12):
        raise ValueError("drivers are not ordered on the sampled points")
    if not np.allclose(low.g(t, x, y, zz), high.g(t, x, y, zz), rtol=0, atol=1e-12):
        raise ValueError("comparison needs the same backward driver g")
    a = solve_bdsde(low, env, ensemble, basis)
    b = solve_bdsde(high, env, ensemble, basis)
    gap = b.y - a.y
    tol = n_se * standard_error(b.pathwise - a.pathwise)
    min_gap = float(np.min(gap))
    return ComparisonReport(min_gap, float(np.mean(gap[:, 0])), tol, bool(min_gap >= -tol))


@dataclass
class StabilityReport:
    scales: list
    sup_sq: list
    constants: list
    slope: float
    target_slope: float
    rel_tol: float
    growth_factor: float
    passed: bool


def sup_sq_difference(a: BdsdeSolution, b: BdsdeSolution) -> float:
    """E sup_s |Y_s - Y'_s|^2 over the common window."""
    return float(np.mean(np.max(np.abs(a.y - b.y), axis=1) ** 2))


def check_stability(runs: Sequence[tuple], target_slope: float = 1.0, rel_tol: float = 0.2,
                    growth_factor: float = 2.0, mode: str = "sharp") -> StabilityReport:
    """Fit ``E sup|dY|^2 ~ C * scale^slope`` over a ladder of solution pairs.

    Each run is ``(solution, solution', scale)``; a ``None`` scale means
    ``E|dxi|^2`` read from the terminal columns. In ``sharp`` mode the slope
    must lie within ``rel_tol`` of ``target_slope`` and the implied constants
    vary by at most ``growth_factor``. In ``bound`` mode only the inequality is
    tested: slope at least ``(1 - rel_tol) * target_slope`` and no constant at a
    smaller scale exceeding one at a larger scale by more than ``growth_factor``
    (a faster decay, e.g. where the solution is flat in the perturbed input, passes).
    """
    if mode not in ("sharp", "bound"):
        raise ValueError("mode must be 'sharp' or 'bound'")
    if not runs:
        raise ValueError("empty ladder")
    scales, sups = [], []
    for a, b, scale in runs:
        if scale is None:
            scale = float(np.mean((a.y[:, -1] - b.y[:, -1]) ** 2))
        scales.append(float(scale))
        sups.append(sup_sq_difference(a, b))
    consts = [s / c if c > 0 else float("inf") for s, c in zip(sups, scales)]
    if all(s == 0 for s in sups):
        # identical solutions: bounded by any constant
        return StabilityReport(scales, sups, consts, float("nan"), target_slope, rel_tol, growth_factor, True)
    if len(runs) == 1:
        slope = float("nan")
        passed = bool(np.isfinite(consts[0]))
    else:
        slope = loglog_slope(scales, sups)
        finite = all(np.isfinite(consts)) and min(consts) > 0
        if mode == "sharp":
            passed = bool(finite and abs(slope - target_slope) <= rel_tol * target_slope
                          and max(consts) <= growth_factor * min(consts))
        else:
            c = np.array(consts)[np.argsort(scales)[::-1]]
            growth = max((c[i] / c[j] for j in range(len(c)) for i in range(j + 1, len(c))), default=1.0)
            passed = bool(all(np.isfinite(consts)) and slope >= (1.0 - rel_tol) * target_slope
                          and growth <= growth_factor)
    return StabilityReport(scales, sups, consts, slope, target_slope, rel_tol, growth_factor, passed)
