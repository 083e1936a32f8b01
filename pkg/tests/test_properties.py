import numpy as np
from hypothesis import given, settings, strategies as st

from bdsoc import (ControlPolicy, RegressionBasis, SpaceGrid, TestFunction, TimeGrid, build_environment, get_model,
                   simulate_forward, solve_bdsde, solve_value_function)
from bdsoc.bdsde import penalize
from bdsoc.control import multilinear
from bdsoc.io import read_csv, write_csv
from bdsoc.registry import linear_closed_form
from bdsoc.stats import loglog_slope

FAST = settings(max_examples=40, deadline=None)
SLOW = settings(max_examples=8, deadline=None)
finite = st.floats(-5.0, 5.0, allow_nan=False)


@FAST
@given(st.floats(0.0, 5.0), st.floats(0.01, 5.0), st.integers(1, 500))
def test_time_grid_invariants(t0, length, n):
    g = TimeGrid(t0, t0 + length, n)
    t = g.times
    assert t[0] == t0 and t[-1] == t0 + length
    assert np.all(np.diff(t) > 0)
    assert np.isclose(g.dt * n, length)


@FAST
@given(st.lists(st.tuples(st.floats(-3, 0), st.floats(0.1, 3), st.integers(2, 9)), min_size=1, max_size=3))
def test_space_grid_invariants(axes):
    lower = [a for a, _, _ in axes]
    upper = [a + w for a, w, _ in axes]
    counts = [c for _, _, c in axes]
    g = SpaceGrid(lower, upper, counts)
    assert np.isclose(g.quadrature_weights().sum(), np.prod([w for _, w, _ in axes]))
    idx = g.nearest_index(g.points)
    assert np.array_equal(idx, np.arange(g.size))
    fine = g.refine()
    assert np.allclose(fine.points.reshape(fine.shape + (g.dim,))[tuple(slice(None, None, 2) for _ in counts)]
                       .reshape(-1, g.dim), g.points)


@FAST
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.lists(st.tuples(st.floats(0, 1), st.floats(0, 2)),
                                                                    min_size=1, max_size=20))
def test_multilinear_reproduces_affine(c0, c1, c2, pts):
    g = SpaceGrid((0.0, 0.0), (1.0, 2.0), (4, 6))
    vals = c0 + c1 * g.points[:, 0] + c2 * g.points[:, 1]
    x = np.array(pts)
    assert np.allclose(multilinear(g, vals, x), c0 + c1 * x[:, 0] + c2 * x[:, 1], atol=1e-12)


@FAST
@given(st.integers(0, 2 ** 31), st.integers(1, 3), st.floats(-3, 3))
def test_projection_is_linear_and_keeps_constants(seed, degree, const):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(80, 1))
    p = RegressionBasis(degree=degree).projector(x)
    a, b = rng.normal(size=80), rng.normal(size=80)
    assert np.allclose(p(a + 2 * b), p(a) + 2 * p(b), atol=1e-9)
    assert np.allclose(p(np.full(80, const)), const, atol=1e-9)
    assert np.allclose(p(p(a)), p(a), atol=1e-9)


@FAST
@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=30), st.floats(0, 1e4), st.floats(1e-4, 0.1))
def test_penalize_properties(pairs, n, dt):
    a = np.array([p[0] for p in pairs])
    obs = np.array([p[1] for p in pairs])
    y = penalize(a, obs, n, dt)
    assert np.all(y >= a - 1e-12)
    assert np.all(y <= np.maximum(a, obs) + 1e-12)
    assert np.all(y[a >= obs] == a[a >= obs])
    # the implicit equation holds
    assert np.allclose(y, a + n * dt * np.maximum(obs - y, 0.0), atol=1e-9 * (1 + n * dt))
    # larger penalty moves closer to the obstacle
    y2 = penalize(a, obs, 2 * n + 1, dt)
    assert np.all(y2 >= y - 1e-12)


@FAST
@given(st.floats(-1, 1), st.floats(-0.5, 0.5), st.floats(0.1, 3), st.floats(0, 0.4), st.floats(0.5, 0.9),
       st.floats(-1, 1), st.floats(-1, 1))
def test_linear_closed_form_flow_property(a, b, c, t, s, bt, bs):
    # Y_t with terminal c at T equals Y_t with terminal Y_s at s
    T, bT = 1.0, bs + 0.3
    direct = linear_closed_form(a, b, c, t, T, (bt, bT))
    mid = linear_closed_form(a, b, c, s, T, (bs, bT))
    assert np.isclose(direct, linear_closed_form(a, b, mid, t, s, (bt, bs)), rtol=1e-12)


@FAST
@given(st.floats(0.05, 5), st.floats(-3, 3), st.floats(0.5, 3))
def test_loglog_slope_recovers_power_laws(c, p, base):
    x = np.array([0.1, 0.05, 0.025]) * base
    assert np.isclose(loglog_slope(x, c * x ** p), p, atol=1e-9)


@FAST
@given(st.floats(-1.5, 1.5), st.floats(0.2, 1.5), st.floats(0, 1), st.lists(st.floats(-4, 4), min_size=1,
                                                                            max_size=40))
def test_test_functions_are_nonnegative_bumps(center, radius, t, xs):
    phi = TestFunction((center,), radius, (1.0, -1.0))
    x = np.array(xs)[:, None]
    vals = phi(t, x)
    assert np.all(vals >= 0)
    assert np.all(vals[np.abs(x[:, 0] - center) >= radius] == 0)


@FAST
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=10))
def test_csv_float_roundtrip_is_exact(values):
    import tempfile
    from pathlib import Path
    with tempfile.TemporaryDirectory() as d:
        p = write_csv(Path(d) / "x.csv", ["v"], [[np.float64(v)] for v in values])
        _, _, rows = read_csv(p)
    assert [float(r[0]) for r in rows] == [float(v) for v in values]


@SLOW
@given(st.integers(0, 10 ** 6), st.integers(1, 40), st.integers(1, 4))
def test_environment_prefix_and_worker_invariance(seed, m, workers):
    g = TimeGrid(0.0, 1.0, 5)
    a = build_environment(g, m, (1, 1), seed, 1)
    b = build_environment(g, m + 7, (1, 1), seed, 1, workers=workers)
    assert np.array_equal(a.w_increments, b.w_increments[:m])


@SLOW
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.integers(0, 1000))
def test_comparison_invariant_under_ordered_shifts(dh, df, b_seed):
    env = build_environment(TimeGrid(0.0, 1.0, 10), 200, (1, 1), 5, b_seed)
    spec = get_model("degenerate-sigma")
    ens = simulate_forward(spec.model, env, (0, np.array([0.5])), ControlPolicy.constant(spec.controls, 1))
    low = solve_bdsde(spec.model, env, ens)
    high = solve_bdsde(spec.model.replace(h=lambda x: np.cos(x[:, 0]) + dh,
                                          f=lambda t, x, y, z, v: -0.2 * v[:, 0] ** 2 + df), env, ens)
    assert high.y0 >= low.y0 - 1e-12


@SLOW
@given(st.floats(0.0, 0.5), st.integers(0, 1000))
def test_value_function_monotone_in_terminal(dh, b_seed):
    env = build_environment(TimeGrid(0.0, 1.0, 10), 1, (1, 1), 0, b_seed)
    spec = get_model("degenerate-sigma")
    grid = SpaceGrid.uniform(1, 3.0, 31)
    u = solve_value_function(spec.model, env, grid, spec.controls)
    up = solve_value_function(spec.model.replace(h=lambda x: np.cos(x[:, 0]) + dh), env, grid, spec.controls)
    assert np.all(up.values >= u.values - 1e-12)


@SLOW
@given(st.integers(0, 1000), st.floats(-1, 1))
def test_flow_identity_at_start_time(seed, x0):
    env = build_environment(TimeGrid(0.0, 1.0, 10), 50, (1, 1), seed, 1)
    spec = get_model("controlled-drift-lq")
    ens = simulate_forward(spec.model, env, (3, np.array([x0])), ControlPolicy.constant(spec.controls, 0))
    assert np.all(ens.values[:, 0, 0] == x0)
