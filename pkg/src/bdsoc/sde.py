"""Euler-Maruyama simulation of the controlled forward state and its moment checks."""
from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model import BrownianEnvironment, CoefficientSet, ControlSet, SpaceGrid
from .stats import loglog_slope

BLOWUP = 1e6


class SimulationError(RuntimeError):
    def __init__(self, path: int, step: int, value):
        super().__init__(f"state blew up on path {path} at step {step}: {value}")
        self.path = path
        self.step = step


@dataclass(frozen=True)
class ControlPolicy:
    """Admissible control valued in a finite ``ControlSet``.

    ``table`` holds control indices: a scalar for ``constant``, shape
    ``(n_steps,)`` for ``open-loop`` and ``(n_steps, *grid.shape)`` for
    ``feedback``, looked up at the nearest grid node.
    """

    controls: ControlSet
    mode: str
    table: np.ndarray
    grid: Optional[SpaceGrid] = None
    tag: str = ""

    def __post_init__(self):
        table = np.asarray(self.table, dtype=np.int64)
        if self.mode not in ("constant", "open-loop", "feedback"):
            raise ValueError(f"unknown policy mode {self.mode!r}")
        if np.any(table < 0) or np.any(table >= len(self.controls)):
            raise ValueError("policy references a control outside the control set")
        if self.mode == "constant" and table.ndim != 0:
            raise ValueError("constant policy takes a single control index")
        if self.mode == "open-loop" and table.ndim != 1:
            raise ValueError("open-loop policy takes one index per step")
        if self.mode == "feedback":
            if self.grid is None:
                raise ValueError("feedback policy needs a space grid")
            if table.shape[1:] != self.grid.shape:
                raise ValueError("feedback table must cover every (step, cell) pair")
        object.__setattr__(self, "table", table)
        if not self.tag:
            object.__setattr__(self, "tag", self._default_tag())

    def _default_tag(self):
        if self.mode == "constant":
            return f"constant[{int(self.table)}]"
        return self.mode

    @classmethod
    def constant(cls, controls: ControlSet, index: int = 0) -> "ControlPolicy":
        return cls(controls, "constant", np.int64(index))

    @classmethod
    def open_loop(cls, controls: ControlSet, indices: Sequence[int]) -> "ControlPolicy":
        return cls(controls, "open-loop", np.asarray(indices))

    @classmethod
    def feedback(cls, controls: ControlSet, table: np.ndarray, grid: SpaceGrid) -> "ControlPolicy":
        return cls(controls, "feedback", table, grid)

    def indices(self, step: int, x: np.ndarray) -> np.ndarray:
        """Control index per sample at global step ``step``."""
        m = x.shape[0]
        if self.mode == "constant":
            return np.full(m, int(self.table), dtype=np.int64)
        if self.mode == "open-loop":
            if step >= self.table.shape[0]:
                raise IndexError(f"open-loop policy has no entry for step {step}")
            return np.full(m, self.table[step], dtype=np.int64)
        if step >= self.table.shape[0]:
            raise IndexError(f"feedback policy has no entry for step {step}")
        return self.table[step].ravel()[self.grid.nearest_index(x)]


@dataclass(frozen=True)
class PathEnsemble:
    """States ``values[p, j]`` at global time index ``t_index + j``."""

    values: np.ndarray  # (M, n_local + 1, n)
    control_idx: np.ndarray  # (M, n_local)
    t_index: int
    x0: np.ndarray
    controls: ControlSet
    policy_tag: str
    seeds: tuple
    model_name: str = ""

    @property
    def m_paths(self) -> int:
        return self.values.shape[0]

    @property
    def n_local(self) -> int:
        return self.values.shape[1] - 1

    @property
    def end_index(self) -> int:
        return self.t_index + self.n_local

    def control_values(self, j: int) -> np.ndarray:
        return self.controls.take(self.control_idx[:, j])


def _simulate_chunk(model, env, x0, policy, t_index, stop, lo, hi):
    times = env.grid.times
    dt = env.grid.dt
    m = hi - lo
    n_loc = stop - t_index
    out = np.empty((m, n_loc + 1, model.n))
    idx = np.empty((m, n_loc), dtype=np.int64)
    out[:, 0] = x0[lo:hi]
    x = out[:, 0].copy()
    for j in range(n_loc):
        i = t_index + j
        ci = policy.indices(i, x)
        v = policy.controls.take(ci)
        dw = env.w_increments[lo:hi, i]
        x = x + np.asarray(model.b(times[i], x, v)).reshape(m, model.n) * dt \
            + np.einsum("pij,pj->pi", np.asarray(model.sigma(times[i], x, v)).reshape(m, model.n, env.d), dw)
        bad = ~np.all(np.isfinite(x), axis=1) | np.any(np.abs(x) > BLOWUP, axis=1)
        if np.any(bad):
            p = int(np.argmax(bad))
            raise SimulationError(lo + p, i + 1, x[p])
        out[:, j + 1] = x
        idx[:, j] = ci
    return out, idx


def simulate_forward(
    model: CoefficientSet,
    env: BrownianEnvironment,
    start: tuple,
    policy: ControlPolicy,
    stop_index: Optional[int] = None,
    workers: int = 1,
) -> PathEnsemble:
    """Euler-Maruyama from ``start = (t_index, x)`` up to ``stop_index`` (default: horizon).

    ``x`` is either one point of shape ``(n,)`` shared by all paths or an
    ``(M, n)`` array of per-path starting states.
    """
    t_index, x = start
    n_steps = env.grid.n_steps
    stop = n_steps if stop_index is None else int(stop_index)
    if not 0 <= t_index <= stop <= n_steps:
        raise ValueError(f"start index {t_index} / stop {stop} outside grid of {n_steps} steps")
    if model.d != env.d:
        raise ValueError(f"model has d={model.d} but environment has d={env.d}")
    m = env.m_paths
    x = np.asarray(x, dtype=float)
    if x.ndim <= 1:
        x0 = np.broadcast_to(x.reshape(1, -1), (m, model.n))
    else:
        x0 = x
    if x0.shape != (m, model.n):
        raise ValueError(f"starting state has shape {x.shape}, expected ({model.n},) or ({m}, {model.n})")
    workers = max(1, int(workers))
    if workers == 1:
        values, idx = _simulate_chunk(model, env, x0, policy, t_index, stop, 0, m)
    else:
        bounds = np.linspace(0, m, workers + 1).astype(int)
        with concurrent.futures.ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda ab: _simulate_chunk(model, env, x0, policy, t_index, stop, ab[0], ab[1]),
                                  zip(bounds[:-1], bounds[1:])))
        values = np.concatenate([p[0] for p in parts])
        idx = np.concatenate([p[1] for p in parts])
    return PathEnsemble(values, idx, int(t_index), np.array(x, dtype=float), policy.controls,
                        policy.tag, env.seeds, model.name)


@dataclass
class MomentReport:
    p: float
    sup_ratio: float
    deltas: list
    delta_ratios: list
    growth_factor: float
    growth: float
    passed: bool


def check_moment_bounds(ensemble: PathEnsemble, dt: float, p: float = 2,
                        deltas: Sequence[float] = (0.1, 0.05, 0.025),
                        growth_factor: float = 2.0) -> MomentReport:
    """Sup-moment ratio and the small-time increment ratio over a ladder of windows.

    The increment ratios ``E sup_{s<=t+delta}|X_s - x|^p / delta^(p/2)`` pass when
    no ratio at a smaller window exceeds a ratio at a larger window by more than
    ``growth_factor``. Ratios that fall as delta shrinks (drift-dominated paths)
    are bounded and pass; identically zero ratios pass too.
    """
    if p not in (2, 4):
        raise ValueError("p must be 2 or 4")
    if ensemble.m_paths == 0:
        raise ValueError("empty ensemble")
    vals = ensemble.values
    x0 = vals[:, 0]
    norms = np.linalg.norm(vals, axis=2)
    sup_ratio = float(np.mean(np.max(norms, axis=1) ** p) / np.mean(1 + np.linalg.norm(x0, axis=1) ** p))
    ratios = []
    for delta in deltas:
        k = int(round(delta / dt))
        if k < 1 or k > ensemble.n_local or not np.isclose(k * dt, delta):
            raise ValueError(f"window {delta} is not a whole number of steps within the ensemble")
        dev = np.linalg.norm(vals[:, : k + 1] - x0[:, None], axis=2)
        ratios.append(float(np.mean(np.max(dev, axis=1) ** p) / delta ** (p / 2)))
    r = np.array(ratios)[np.argsort(deltas)[::-1]]
    growth = 1.0
    for j in range(len(r)):
        for i in range(j + 1, len(r)):
            if r[i] > 0:
                growth = max(growth, r[i] / r[j] if r[j] > 0 else np.inf)
    passed = bool(growth <= growth_factor and np.isfinite(sup_ratio))
    return MomentReport(p, sup_ratio, list(deltas), ratios, growth_factor, float(growth), passed)


@dataclass
class FlowStabilityReport:
    offsets: list
    sup_sq: list
    slope: float
    constants: list
    target: float
    rel_tol: float
    passed: bool


def check_flow_stability(model: CoefficientSet, env: BrownianEnvironment, x: np.ndarray,
                         policy: ControlPolicy, offsets: Sequence[float] = (0.1, 0.05, 0.025),
                         t_index: int = 0, rel_tol: float = 0.2) -> FlowStabilityReport:
    """E sup|X^x - X^{x'}|^2 against |x - x'| on a ladder; the log-log slope should be 2."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    base = simulate_forward(model, env, (t_index, x), policy)
    direction = np.ones_like(x) / np.sqrt(x.size)
    sup_sq = []
    for eps in offsets:
        other = simulate_forward(model, env, (t_index, x + eps * direction), policy)
        diff = np.linalg.norm(other.values - base.values, axis=2)
        sup_sq.append(float(np.mean(np.max(diff, axis=1) ** 2)))
    slope = loglog_slope(offsets, sup_sq)
    consts = [s / e ** 2 for s, e in zip(sup_sq, offsets)]
    return FlowStabilityReport(list(offsets), sup_sq, slope, consts, 2.0, rel_tol,
                               bool(abs(slope - 2.0) <= rel_tol * 2.0))


def check_control_stability(model: CoefficientSet, env: BrownianEnvironment, x: np.ndarray,
                            controls: ControlSet, base_index: int, other_indices: Sequence[int],
                            t_index: int = 0, growth_factor: float = 2.0) -> FlowStabilityReport:
    """E sup|X^v - X^{v'}|^2 against the integrated control gap for constant controls.

    Passes when the implied constants stay within ``growth_factor`` of each other.
    """
    grid = env.grid
    horizon = grid.T - grid.time(t_index)
    base = simulate_forward(model, env, (t_index, x), ControlPolicy.constant(controls, base_index))
    gaps, sup_sq = [], []
    for j in other_indices:
        other = simulate_forward(model, env, (t_index, x), ControlPolicy.constant(controls, j))
        diff = np.linalg.norm(other.values - base.values, axis=2)
        sup_sq.append(float(np.mean(np.max(diff, axis=1) ** 2)))
        gaps.append(float(horizon * np.sum((controls.points[j] - controls.points[base_index]) ** 2)))
    consts = [s / g for s, g in zip(sup_sq, gaps)]
    slope = loglog_slope(gaps, sup_sq)
    passed = bool(max(consts) <= growth_factor * min(consts))
    return FlowStabilityReport(gaps, sup_sq, slope, consts, 1.0, growth_factor - 1.0, passed)


def fit_growth_exponent(model: CoefficientSet, env: BrownianEnvironment, policy: ControlPolicy,
                        starts: Sequence[float] = (1.0, 2.0, 4.0), p: float = 2, t_index: int = 0) -> float:
    """Empirical exponent q in ``E sup|X^{t,x}|^p <= C (1 + |x|^q)``.

    Log-log slope of the sup-moment against ``|x|`` for starting points along
    the first axis; the starts should sit away from the origin, where the
    ``|x|^q`` term dominates. The exponent is only reported, never asserted.
    """
    starts = [float(s) for s in starts]
    if len(starts) < 2 or any(s <= 0 for s in starts):
        raise ValueError("need at least two positive starting magnitudes")
    moments = []
    for s in starts:
        x = np.zeros(model.n)
        x[0] = s
        ens = simulate_forward(model, env, (t_index, x), policy)
        moments.append(float(np.mean(np.max(np.linalg.norm(ens.values, axis=2), axis=1) ** p)))
    return loglog_slope(starts, moments)
