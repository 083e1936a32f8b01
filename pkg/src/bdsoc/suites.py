"""Verification suites and the resolved run configuration used by the command-line runner."""
from __future__ import annotations

import copy
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .bdsde import check_comparison, check_stability, penalty_ladder, solve_bdsde
from .control import (check_continuity, check_dpp, compare_backends, extract_epsilon_optimal, semigroup,
                      solve_value_function)
from .model import SpaceGrid, TimeGrid, WeightFunction, build_environment
from .regression import RegressionBasis
from .registry import get_model, linear_closed_form
from .sde import ControlPolicy, check_flow_stability, check_moment_bounds, fit_growth_exponent, simulate_forward
from .weak import (calibrate_weak_tolerance, check_norm_equivalence, check_supersolution_representation,
                   check_weak_inequalities, default_battery)

DEFAULTS = {
    "model": None,
    "model_params": {},
    "grid": {"t0": 0.0, "T": 1.0, "steps": 50, "radius": 3.0, "nodes": 601},
    "simulation": {"paths": 10000, "seed": None, "b_seed": None, "x0": 0.0, "control": "auto", "export_paths": 20},
    "regression": {"kind": "polynomial", "degree": 2},
    "moments": {"steps": 200, "deltas": [0.1, 0.05, 0.025], "offsets": [0.1, 0.05, 0.025], "p": 2},
    "stability": {"eps": [0.1, 0.05, 0.025], "mode": "bound"},
    "comparison": {"instances": 5},
    "penalty": {"model": "zero", "levels": [2 ** k for k in range(11)], "level": 1.0, "slope": 1.0},
    "value": {"backend": "grid-DP", "gh_nodes": 5, "mc_nodes": 61},
    "dpp": {"t_fractions": [0.0, 0.2, 0.4, 0.6, 0.7], "x": [-1.0, -0.5, 0.0, 0.5, 1.0], "deltas": [1, 5, 10]},
    "weak": {"epsilon": 0.05, "n_se": 3.0, "norm_paths": 1000, "norm_nodes": 61, "norm_radius": 6.0,
             "norm_bounds": [0.5, 2.0], "tol_z": 0.1},
    "continuity": {"b_seeds": 20, "x": 2.0, "x_t": 0.0, "x_offsets": [0.05, 0.1, 0.2], "t_offsets": [1, 2, 4],
                   "mode": "bound", "rel_tol": 0.25},
}


class ConfigError(ValueError):
    pass


def merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], val)
        else:
            out[key] = val
    return out


def set_dotted(cfg: dict, key: str, value):
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r} descends into a non-section")
    node[parts[-1]] = value


def resolve(cfg: dict) -> dict:
    cfg = merge(DEFAULTS, cfg)
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    if cfg["model"] is None:
        raise ConfigError("no model named; set model = \"...\" or pass --model")
    sim = cfg["simulation"]
    if sim.get("seed") is None or sim.get("b_seed") is None:
        raise ConfigError("seeds are mandatory: set simulation.seed and simulation.b_seed (or --seed/--b-seed)")
    get_model(cfg["model"], **cfg["model_params"])
    get_model(cfg["penalty"]["model"])
    return cfg


@dataclass
class Check:
    suite: str
    name: str
    value: float
    tol: float
    passed: bool
    relation: str = "<="
    criterion: int = 0
    informational: bool = False
    note: str = ""


@dataclass
class SuiteResult:
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)  # stem -> (columns, rows)

    def extend(self, other: "SuiteResult"):
        self.checks.extend(other.checks)
        self.tables.update(other.tables)


class Run:
    """Lazily built objects shared by the suites of one invocation."""

    def __init__(self, cfg: dict, workers: int = 1):
        self.cfg = resolve(cfg)
        self.workers = max(1, int(workers))
        self.spec = get_model(self.cfg["model"], **self.cfg["model_params"])
        self.model = self.spec.model
        self.controls = self.spec.controls
        sim = self.cfg["simulation"]
        self.seed, self.b_seed = int(sim["seed"]), int(sim["b_seed"])
        self.x0 = np.atleast_1d(np.asarray(sim["x0"], dtype=float))
        if sim["control"] == "auto":
            # smallest |v|; for the registry models that is the drift-free control
            mags = np.linalg.norm(self.controls.points, axis=1)
            self.control = int(np.argmin(mags))
        else:
            self.control = int(sim["control"])
        if not 0 <= self.control < len(self.controls):
            raise ConfigError(f"simulation.control must be 'auto' or index the {len(self.controls)} controls")

    @property
    def seeds(self) -> str:
        return f"{self.seed}/{self.b_seed}"

    @cached_property
    def time_grid(self) -> TimeGrid:
        g = self.cfg["grid"]
        return TimeGrid(g["t0"], g["T"], int(g["steps"]))

    @cached_property
    def grid(self) -> SpaceGrid:
        g = self.cfg["grid"]
        return SpaceGrid.uniform(self.model.n, g["radius"], int(g["nodes"]))

    @cached_property
    def env(self):
        return build_environment(self.time_grid, int(self.cfg["simulation"]["paths"]),
                                 (self.model.d, self.model.l), self.seed, self.b_seed, self.workers)

    @cached_property
    def basis(self) -> RegressionBasis:
        r = self.cfg["regression"]
        return RegressionBasis(r["kind"], int(r["degree"]))

    @cached_property
    def ensemble(self):
        return simulate_forward(self.model, self.env, (0, self.x0), ControlPolicy.constant(self.controls, self.control),
                                workers=self.workers)

    @cached_property
    def field(self):
        v = self.cfg["value"]
        return solve_value_function(self.model, self.env, self.grid, self.controls, v["backend"], int(v["gh_nodes"]))

    def meta(self, **extra) -> dict:
        out = {"model": self.model.name, "master_seed": self.seed, "b_seed": self.b_seed,
               "paths": int(self.cfg["simulation"]["paths"]), "steps": self.time_grid.n_steps}
        out.update(extra)
        return out


def _ensemble_rows(ens, times, limit):
    rows = []
    for p in range(min(limit, ens.m_paths)):
        for j in range(ens.n_local + 1):
            c = int(ens.control_idx[p, j]) if j < ens.n_local else ""
            rows.append([p, ens.t_index + j, float(times[ens.t_index + j])] + list(ens.values[p, j]) + [c])
    return rows


def simulate_suite(run: Run) -> SuiteResult:
    res = SuiteResult()
    ens = run.ensemble
    n = run.model.n
    res.tables["ensemble"] = (["path", "t_index", "time"] + [f"x{i}" for i in range(n)] + ["control"],
                              _ensemble_rows(ens, run.time_grid.times, int(run.cfg["simulation"]["export_paths"])))
    m = run.cfg["moments"]
    grid = TimeGrid(run.time_grid.t0, run.time_grid.T, int(m["steps"]))
    env = build_environment(grid, int(run.cfg["simulation"]["paths"]), (run.model.d, run.model.l),
                            run.seed, run.b_seed, run.workers)
    policy = ControlPolicy.constant(run.controls, run.control)
    fine = simulate_forward(run.model, env, (0, run.x0), policy, workers=run.workers)
    mom = check_moment_bounds(fine, grid.dt, int(m["p"]), m["deltas"])
    res.checks.append(Check("simulate", "increment-moment growth as delta shrinks", mom.growth, mom.growth_factor,
                            mom.passed, criterion=4))
    res.checks.append(Check("simulate", "sup-moment ratio finite", mom.sup_ratio, float("inf"),
                            bool(np.isfinite(mom.sup_ratio)), "<", criterion=4))
    flow = check_flow_stability(run.model, env, run.x0, policy, m["offsets"])
    res.checks.append(Check("simulate", "flow exponent |slope-2|", abs(flow.slope - 2.0), flow.rel_tol * 2.0,
                            flow.passed, criterion=4, note=f"slope={flow.slope!r}"))
    q = fit_growth_exponent(run.model, env, policy, p=int(m["p"]))
    res.checks.append(Check("simulate", "fitted growth exponent q of the sup-moment", q, float("nan"), True, "info",
                            criterion=4, informational=True))
    res.tables["moments"] = (["delta", "ratio"], [[d, q] for d, q in zip(mom.deltas, mom.delta_ratios)])
    res.tables["flow"] = (["offset", "sup_sq"], [[o, s] for o, s in zip(flow.offsets, flow.sup_sq)])
    return res


def bdsde_suite(run: Run) -> SuiteResult:
    res = SuiteResult()
    env, ens = run.env, run.ensemble
    sol = solve_bdsde(run.model, env, ens, run.basis)
    times = run.time_grid.times
    rows = []
    for j in range(ens.n_local + 1):
        zmean = list(np.mean(sol.z[:, j], axis=0)) if j < ens.n_local else [""] * env.d
        rows.append([j, float(times[j]), float(np.mean(sol.y[:, j]))] + zmean)
    res.tables["bdsde"] = (["t_index", "time", "mean_y"] + [f"mean_z{i}" for i in range(env.d)], rows)
    name = run.model.name
    if name == "martingale":
        budget = 3 * sol.std_error + 0.05 * np.sqrt(run.time_grid.dt)
        res.checks.append(Check("bdsde", "|Y0 - x0|", abs(sol.y0 - float(run.x0[0])), budget,
                                abs(sol.y0 - float(run.x0[0])) <= budget, criterion=1))
        sig = float(run.spec.params["sigma"])
        zerr = float(np.mean(np.abs(sol.z[:, :, 0] - sig))) / abs(sig) if sig else float(np.mean(np.abs(sol.z)))
        res.checks.append(Check("bdsde", "time-averaged |Z - sigma grad V| / |sigma grad V|", zerr, 0.1,
                                zerr <= 0.1, criterion=8))
    elif name == "linear-bdsde":
        p = run.spec.params
        bp = env.b_path()[:, 0]
        exact = linear_closed_form(p["a"], p["b"], p["c"], run.time_grid.t0, run.time_grid.T, (bp[0], bp[-1]))
        rel = abs(sol.y0 - exact) / abs(exact)
        res.checks.append(Check("bdsde", "relative error vs closed form", rel, 0.05, rel <= 0.05, criterion=1,
                                note=f"closed_form={exact!r}"))
    else:
        res.checks.append(Check("bdsde", "Y0 finite", sol.y0, float("inf"), bool(np.isfinite(sol.y0)), "<",
                                criterion=1, note="no closed form for this model"))
    res.checks.append(Check("bdsde", "Y0", sol.y0, sol.std_error, True, "+-", informational=True))

    # stability in the terminal value and in the starting state
    eps = run.cfg["stability"]["eps"]
    runs = []
    for e in eps:
        bumped = run.model.replace(h=lambda x, h=run.model.h, e=e: h(x) + e * np.cos(x[:, 0]))
        runs.append((sol, solve_bdsde(bumped, env, ens, run.basis), None))
    mode = run.cfg["stability"]["mode"]
    st = check_stability(runs, mode=mode)
    res.checks.append(_stability_check("terminal", st, mode))
    runs = []
    policy = ControlPolicy.constant(run.controls, run.control)
    for e in eps:
        other = simulate_forward(run.model, env, (0, run.x0 + e), policy, workers=run.workers)
        runs.append((sol, solve_bdsde(run.model, env, other, run.basis), e * e))
    st = check_stability(runs, mode=mode)
    res.checks.append(_stability_check("state", st, mode))

    # comparison on randomly shifted, ordered parameters
    rows = []
    for i in range(int(run.cfg["comparison"]["instances"])):
        rng = np.random.default_rng([run.seed, 1000 + i])
        dh, df = rng.uniform(0.0, 0.5, size=2)
        high = run.model.replace(h=lambda x, h=run.model.h, dh=dh: h(x) + dh,
                                 f=lambda t, x, y, z, v, f=run.model.f, df=df: f(t, x, y, z, v) + df)
        rep = check_comparison(run.model, high, env, ens, run.basis, seed=i)
        rows.append([i, dh, df, rep.min_gap, rep.tol, int(rep.passed)])
        res.checks.append(Check("bdsde", f"comparison instance {i}: min(Y'-Y)", rep.min_gap, -rep.tol, rep.passed,
                                ">=", criterion=2))
    res.tables["comparison"] = (["instance", "dh", "df", "min_gap", "tol", "passed"], rows)
    return res


def _stability_check(label: str, st, mode: str) -> Check:
    if mode == "sharp":
        gap = abs(st.slope - 1.0) if np.isfinite(st.slope) else 0.0
        return Check("bdsde", f"{label} stability |slope-1|", gap, st.rel_tol, st.passed, criterion=3,
                     note=f"slope={st.slope!r}")
    slope = st.slope if np.isfinite(st.slope) else float("inf")
    return Check("bdsde", f"{label} stability slope", slope, 1.0 - st.rel_tol, st.passed, ">=", criterion=3,
                 note=f"mode=bound constants={st.constants!r}")


def penalty_suite(run: Run) -> SuiteResult:
    res = SuiteResult()
    p = run.cfg["penalty"]
    spec = get_model(p["model"])
    level, slope = float(p["level"]), float(p["slope"])
    obstacle = lambda t, x: np.full(np.asarray(x).shape[0], level - slope * t)
    env = build_environment(run.time_grid, int(run.cfg["simulation"]["paths"]), (spec.model.d, spec.model.l),
                            run.seed, run.b_seed, run.workers)
    ens = simulate_forward(spec.model, env, (0, run.x0), ControlPolicy.constant(spec.controls, 0), workers=run.workers)
    rep = penalty_ladder(spec.model, env, ens, run.basis, obstacle, [float(n) for n in p["levels"]])
    res.tables["penalty"] = (["n", "y0", "k_end", "k_end_sq", "max_negative_part", "skorokhod"],
                             [[lv.n, lv.y0, lv.k_end, lv.k_end_sq, lv.max_negative_part, lv.skorokhod]
                              for lv in rep.levels])
    top = rep.levels[-1]
    t0, T = run.time_grid.t0, run.time_grid.T
    res.checks.append(Check("penalty", "max(Y^n - V)^- decreasing in n", float(rep.monotone_negative_part), 1.0,
                            rep.monotone_negative_part, "==", criterion=7))
    tol_sk = run.time_grid.dt * max(1.0, abs(top.k_end))
    res.checks.append(Check("penalty", "Skorokhod residual", top.skorokhod, tol_sk, top.skorokhod <= tol_sk,
                            criterion=7))
    if spec.model.name == "zero":
        target = level - slope * t0
        k_target = slope * (T - t0)
        ey = abs(top.y0 - target) / abs(target)
        ek = abs(top.k_end - k_target) / abs(k_target)
        res.checks.append(Check("penalty", "top-level Y0 relative error", ey, 0.02, ey <= 0.02, criterion=7))
        res.checks.append(Check("penalty", "top-level K_T relative error", ek, 0.05, ek <= 0.05, criterion=7))
    res.checks.append(Check("penalty", "extrapolated Y0", rep.y0_limit, float("nan"), True, "info",
                            informational=True))
    return res


def value_suite(run: Run) -> SuiteResult:
    res = SuiteResult()
    fld = run.field
    grid, times = fld.grid, fld.time_grid.times
    pts = grid.points
    rows = []
    for i in range(fld.time_grid.n_steps + 1):
        u = fld.values[i].ravel()
        a = fld.argmax[i].ravel()
        for j in range(grid.size):
            rows.append([i, float(times[i])] + list(pts[j]) + [float(u[j]), int(a[j])])
    res.tables["value_field"] = (["t_index", "time"] + [f"x{k}" for k in range(grid.dim)] + ["u", "argmax"], rows)
    u0 = fld.at(0, run.x0)
    # sup dominance over the constant controls; the field's own discretisation
    # error is budgeted by one space refinement
    budget = _space_budget(run)
    for c in range(len(run.controls)):
        j, se = semigroup(run.model, run.env, (0, run.x0), run.time_grid.n_steps, run.model.h, c, run.controls,
                          run.basis)
        gap = j - u0
        tol = 3 * se + budget + 1e-9
        res.checks.append(Check("value", f"J(constant {c}) - u", gap, tol, gap <= tol, criterion=6,
                                note="sup dominance"))
    if grid.dim == 1:
        v = run.cfg["value"]
        coarse = SpaceGrid.uniform(1, run.cfg["grid"]["radius"], int(v["mc_nodes"]))
        rep = compare_backends(run.model, run.env, coarse, run.controls, run.x0, int(v["gh_nodes"]))
        res.checks.append(Check("value", "|u_grid - u_mc| at (t0, x0)", abs(rep.u_grid - rep.u_mc), rep.tol,
                                rep.passed, criterion=6, note=f"u_grid={rep.u_grid!r} u_mc={rep.u_mc!r}"))
    return res


def _space_budget(run: Run) -> float:
    fine = solve_value_function(run.model, run.env, run.grid.refine(), run.controls, "grid-DP",
                                int(run.cfg["value"]["gh_nodes"]))
    return abs(fine.at(0, run.x0) - run.field.at(0, run.x0))


def dpp_suite(run: Run) -> SuiteResult:
    res = SuiteResult()
    d = run.cfg["dpp"]
    n = run.time_grid.n_steps
    probes = [(int(round(f * n)), [float(x)]) for f, x in zip(d["t_fractions"], d["x"])]
    deltas = [int(k) for k in d["deltas"] if all(t + int(k) <= n for t, _ in probes)]
    if not deltas:
        raise ConfigError("no DPP window fits inside the time grid")
    rep = check_dpp(run.field, run.env, run.model, deltas, probes, run.basis)
    res.tables["dpp"] = (["t_index", "x", "delta_steps", "u", "best", "best_control", "residual", "std_error",
                          "tol", "passed"],
                         [[r.t_index, r.x[0], r.delta_steps, r.u, r.best, r.best_control, r.residual, r.std_error,
                           r.tol, int(r.passed)] for r in rep.rows])
    for r in rep.rows:
        res.checks.append(Check("dpp", f"residual t={r.t_index} x={r.x[0]} delta={r.delta_steps}", r.residual, r.tol,
                                r.passed, criterion=5))
    eps = float(run.cfg["weak"]["epsilon"])
    cert = extract_epsilon_optimal(run.field, run.model, run.env, (0, run.x0), eps, run.basis)
    res.checks.append(Check("dpp", "epsilon-optimal gap + 3 SE", cert.gap + 3 * cert.std_error, eps, cert.certified,
                            criterion=5, note=f"achieved gap={cert.gap!r}"))
    return res


def weak_suite(run: Run) -> SuiteResult:
    res = SuiteResult()
    w = run.cfg["weak"]
    tests = default_battery(run.model.n, 1.0, (run.time_grid.t0, run.time_grid.T))
    c_ref = calibrate_weak_tolerance(run.model, run.env, run.grid, run.controls, tests,
                                     int(run.cfg["value"]["gh_nodes"]), refine_seed=run.seed)
    rep = check_weak_inequalities(run.field, run.model, run.env, tests, float(w["epsilon"]), c_ref, float(w["n_se"]))
    res.tables["weak"] = (["test_id", "test", "control", "lhs", "rhs", "margin", "rhs_literal", "margin_literal",
                           "route_difference"],
                          [[r.test_id, r.test_label, r.control, r.lhs, r.rhs, r.margin, r.rhs_literal,
                            r.margin_literal, r.route_difference] for r in rep.rows])
    res.checks.append(Check("weak", "min margin over all controls", rep.min_margin, -rep.tol, rep.passed_all_controls,
                            ">=", criterion=10))
    worst_best = max(m for _, m in rep.best_control.values())
    res.checks.append(Check("weak", "max over tests of the best-control margin", worst_best, rep.epsilon,
                            rep.passed_attained, criterion=10))
    if run.model.name == "transport-control":
        top = len(run.controls) - 1
        m1 = max(abs(r.margin) for r in rep.rows if r.control == str(top))
        res.checks.append(Check("weak", "|margin| at v=1", m1, 1e-8, m1 <= 1e-8, criterion=10))
    res.checks.append(Check("weak", "route difference", rep.max_route_difference, rep.tol, rep.routes_agree,
                            criterion=10))
    cell = float(np.max(run.grid.spacing))
    adj_tol = cell ** 2 * (1.0 + float(np.max(np.abs(run.field.values))))
    res.checks.append(Check("weak", "integration-by-parts residual", rep.adjoint_residual, adj_tol,
                            rep.adjoint_residual <= adj_tol, criterion=10))
    res.checks.append(Check("weak", "literal bilinear form: all-controls inequality holds",
                            float(rep.literal_passed_all_controls), 1.0, True, "==", criterion=10, informational=True))
    res.checks.append(Check("weak", "literal bilinear form: epsilon attainment holds",
                            float(rep.literal_passed_attained), 1.0, True, "==", criterion=10, informational=True))
    res.checks.append(Check("weak", "H-norm of the field", rep.h_norm, float("inf"), bool(np.isfinite(rep.h_norm)),
                            "<", criterion=10))

    paths = min(int(w["norm_paths"]), int(run.cfg["simulation"]["paths"]))
    env = build_environment(run.time_grid, paths, (run.model.d, run.model.l), run.seed, run.b_seed, run.workers)
    ngrid = SpaceGrid.uniform(run.model.n, float(w["norm_radius"]), int(w["norm_nodes"]))
    n = run.time_grid.n_steps
    eq = check_norm_equivalence(run.model, env, ControlPolicy.constant(run.controls, run.control),
                                WeightFunction.gaussian(run.model.n), tests[::2], ngrid,
                                sorted({0, n // 4, n // 2, n}), bounds=tuple(w["norm_bounds"]))
    res.tables["norm_equivalence"] = (["test", "s_index", "ratio"],
                                      [[k[0], k[1], v] for k, v in eq.ratios.items()]
                                      + [[k, "integrated", v] for k, v in eq.integrated.items()])
    res.checks.append(Check("weak", "norm-equivalence ratios min", eq.c, w["norm_bounds"][0],
                            eq.c >= w["norm_bounds"][0], ">=", criterion=9))
    res.checks.append(Check("weak", "norm-equivalence ratios max", eq.C, w["norm_bounds"][1],
                            eq.C <= w["norm_bounds"][1], criterion=9))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rr = check_supersolution_representation(run.field, run.model, run.env, run.control, run.x0,
                                                basis=run.basis, tol_z=float(w["tol_z"]))
    res.checks.append(Check("weak", "penalised Y^n distance to V", rr.y_error[-1], 0.05, rr.y_converging,
                            criterion=7))
    res.checks.append(Check("weak", "E K_T^2 finite", rr.k_end_sq, float("inf"), bool(np.isfinite(rr.k_end_sq)),
                            "<", criterion=7))
    res.checks.append(Check("weak", "time-averaged relative |Z^n - sigma grad V|", rr.z_error, rr.tol_z,
                            rr.z_error <= rr.tol_z, criterion=8))
    res.checks.append(Check("weak", "time-averaged mean |sigma grad V| along paths", rr.z_scale, float("nan"), True,
                            "info", criterion=8, informational=True,
                            note="a small value makes the relative Z error ill-conditioned"))
    return res


def continuity_suite(run: Run) -> SuiteResult:
    res = SuiteResult()
    c = run.cfg["continuity"]
    seeds = list(range(run.b_seed + 1, run.b_seed + 1 + int(c["b_seeds"])))
    rep = check_continuity(run.model, run.time_grid, run.grid, run.controls, seeds, [float(c["x"])],
                           [float(o) for o in c["x_offsets"]], 0, [int(k) for k in c["t_offsets"]],
                           int(run.cfg["value"]["gh_nodes"]), float(c["rel_tol"]), x_t=[float(c["x_t"])],
                           mode=c["mode"])
    res.tables["continuity"] = (["ladder", "offset", "mean_sq"],
                                [["x", o, v] for o, v in zip(rep.x_offsets, rep.x_mean_sq)]
                                + [["t", o, v] for o, v in zip(rep.t_offsets, rep.t_mean_sq)])
    tol = float(c["rel_tol"])
    for label, slope in (("x", rep.x_slope), ("t", rep.t_slope)):
        note = "all differences zero" if not np.isfinite(slope) else ""
        if c["mode"] == "sharp":
            value = abs(slope - 1.0) if np.isfinite(slope) else 0.0
            res.checks.append(Check("continuity", f"{label}-slope |slope-1|", value, tol, rep.passed,
                                    criterion=11, note=note))
        else:
            res.checks.append(Check("continuity", f"{label}-slope (bound)", slope, 1.0 - tol, rep.passed, ">=",
                                    criterion=11, note=note))
    return res


def reproducibility_suite(run: Run) -> SuiteResult:
    """Re-simulates with a different worker count and compares the exported bytes."""
    res = SuiteResult()
    other_workers = 2 if run.workers == 1 else 1
    env = build_environment(run.time_grid, int(run.cfg["simulation"]["paths"]), (run.model.d, run.model.l),
                            run.seed, run.b_seed, other_workers)
    ens = simulate_forward(run.model, env, (0, run.x0), ControlPolicy.constant(run.controls, run.control),
                           workers=other_workers)
    same = bool(np.array_equal(ens.values, run.ensemble.values))
    res.checks.append(Check("reproducibility", f"paths identical with workers={other_workers}", float(same), 1.0,
                            same, "==", criterion=12))
    return res


PIPELINES = {
    "simulate": [simulate_suite],
    "solve-bdsde": [bdsde_suite],
    "solve-penalized": [penalty_suite],
    "value": [value_suite],
    "verify-dpp": [dpp_suite],
    "verify-weak": [weak_suite],
    "verify-all": [simulate_suite, bdsde_suite, penalty_suite, value_suite, dpp_suite, weak_suite,
                   continuity_suite, reproducibility_suite],
}


def run_pipeline(name: str, run: Run) -> SuiteResult:
    if name not in PIPELINES:
        raise ConfigError(f"unknown pipeline {name!r}; valid: {', '.join(PIPELINES)}")
    out = SuiteResult()
    for suite in PIPELINES[name]:
        out.extend(suite(run))
    return out
