from math import erf

import numpy as np
import pytest

from bdsoc import (ControlPolicy, SpaceGrid, TestFunction, TimeGrid, WeightFunction, build_environment,
                   check_adjoint_identity, check_norm_equivalence, check_supersolution_representation,
                   check_weak_inequalities, default_battery, get_model, solve_value_function, weighted_norms)
from bdsoc.weak import adjoint_residual, spatial_norms, weak_margins

import oracles

FINE = SpaceGrid.uniform(1, 3.0, 601)


def test_test_function_support_and_gradient():
    phi = TestFunction((0.5,), 1.0, (1.0, -1.0))
    x = np.linspace(-1.0, 2.0, 301)[:, None]
    vals = phi.bump(x)
    assert np.all(vals[np.abs(x[:, 0] - 0.5) >= 1.0] == 0)
    assert np.all(vals >= 0)
    h = 1e-6
    fd = (phi.bump(x + h) - phi.bump(x - h)) / (2 * h)
    assert np.allclose(phi.bump_gradient(x)[:, 0], fd, atol=1e-6)
    assert phi(0.25, np.array([[0.5]]))[0] == pytest.approx(0.75 * np.exp(-1.0))
    assert phi.time_derivative(0.3, np.array([[0.5]]))[0] == pytest.approx(-np.exp(-1.0))


def test_test_function_rejections():
    with pytest.raises(ValueError):
        TestFunction((0.0,), 0.0)
    with pytest.raises(ValueError):
        TestFunction((0.0,), 1.0, (-1.0, 0.5))
    with pytest.raises(ValueError):
        TestFunction((2.5,), 1.0).check_support(SpaceGrid.uniform(1, 3.0, 31))
    with pytest.raises(ValueError):
        TestFunction((0.0, 0.0), 1.0).check_support(SpaceGrid.uniform(1, 3.0, 31))


def test_default_battery():
    tests = default_battery(1, 1.0, (0.0, 1.0))
    assert len(tests) == 10
    assert len({t.label for t in tests}) == 10
    assert sorted({t.center[0] for t in tests}) == [-1.0, -0.5, 0.0, 0.5, 1.0]


def test_adjoint_residual_second_order():
    model = get_model("martingale").model
    phi = TestFunction((0.2,), 1.0)
    res = []
    for n in (61, 121, 241):
        g = SpaceGrid.uniform(1, 3.0, n)
        r, route = adjoint_residual(np.sin(g.points[:, 0]), g, model, phi)
        res.append(r)
    assert res[0] / res[1] > 3.0 and res[1] / res[2] > 3.0
    # route 1 equals int cos(x) phi'(x) dx = int sin(x) phi(x) dx
    g = SpaceGrid.uniform(1, 3.0, 2001)
    w = g.quadrature_weights().ravel()
    _, route = adjoint_residual(np.sin(g.points[:, 0]), g, model, phi)
    assert route == pytest.approx(np.dot(w, np.sin(g.points[:, 0]) * phi(0.0, g.points)), abs=1e-5)


def test_weighted_norms_of_known_functions():
    rho = WeightFunction.gaussian(1)
    g = SpaceGrid.uniform(1, 6.0, 1201)
    n = spatial_norms(g.points[:, 0], g, rho)
    assert n.l2 == pytest.approx(1.0, abs=1e-3)
    assert n.grad == pytest.approx(1.0, abs=1e-3)
    sig = np.full((g.size, 1, 1), 2.0)
    assert spatial_norms(g.points[:, 0], g, rho, sig).sigma_grad == pytest.approx(4.0, abs=4e-3)
    with pytest.raises(ValueError):
        spatial_norms(np.full(g.size, np.nan), g, rho)


@pytest.fixture(scope="module")
def transport():
    tg = TimeGrid(0.0, 1.0, 50)
    env = build_environment(tg, 200, (1, 1), 7, 11)
    spec = get_model("transport-control")
    return spec, env, solve_value_function(spec.model, env, FINE, spec.controls)


def test_weak_certificate_on_transport(transport):
    spec, env, fld = transport
    rep = check_weak_inequalities(fld, spec.model, env, default_battery())
    assert rep.passed
    top = [r for r in rep.rows if r.control == "2"]
    assert max(abs(r.margin) for r in top) <= 1e-8
    # the suboptimal constant controls leave a positive margin
    assert min(r.margin for r in rep.rows if r.control == "0") > 0.1
    assert rep.literal_passed_all_controls and rep.routes_agree


def test_weak_margins_need_matching_b_path(transport):
    spec, env, fld = transport
    other = build_environment(env.grid, 10, (1, 1), 7, 99)
    with pytest.raises(ValueError):
        weak_margins(fld, spec.model, other, default_battery())


def test_weak_certificate_rejects_a_wrong_field(transport):
    spec, env, fld = transport
    bad = fld.__class__(fld.values * 0.5, fld.argmax, fld.grid, fld.time_grid, fld.controls, fld.b_seed,
                        fld.backend)
    rep = check_weak_inequalities(bad, spec.model, env, default_battery())
    assert not rep.passed


def test_energy_and_literal_forms_differ_with_drift():
    # b = v constant: the literal form drops the transport term b . grad u
    tg = TimeGrid(0.0, 1.0, 50)
    env = build_environment(tg, 200, (1, 1), 7, 11)
    spec = get_model("controlled-drift-lq")
    fld = solve_value_function(spec.model, env, FINE, spec.controls)
    rows = weak_margins(fld, spec.model, env, default_battery())
    diff = max(abs(r.margin - r.margin_literal) for r in rows)
    assert diff > 1e-3
    assert max(abs(r.route_difference) for r in rows) < 0.02


def test_adjoint_identity_on_field(transport):
    spec, env, fld = transport
    assert check_adjoint_identity(fld, spec.model, env, default_battery()) == 0.0


def test_norm_equivalence_matches_oracle():
    tg = TimeGrid(0.0, 1.0, 20)
    env = build_environment(tg, 4000, (1, 1), 3, 4)
    spec = get_model("martingale")
    tests = [TestFunction((c,), 1.0) for c in (0.0, 1.0)]
    grid = SpaceGrid.uniform(1, 6.0, 41)
    rep = check_norm_equivalence(spec.model, env, ControlPolicy.constant(spec.controls), WeightFunction.gaussian(1),
                                 tests, grid, [5, 20], bounds=(0.5, 2.0))
    assert rep.passed
    for (label, s), ratio in rep.ratios.items():
        c = tests[[t.label for t in tests].index(label)].center[0]
        assert ratio == pytest.approx(oracles.EQUIVALENCE_RATIOS[(c, s / 20)], rel=0.1)
    with pytest.raises(ValueError):
        check_norm_equivalence(spec.model, env, ControlPolicy.constant(spec.controls), WeightFunction.gaussian(1),
                               tests, grid, [25])


def test_weighted_norms_of_field(transport):
    spec, env, fld = transport
    n = weighted_norms(fld, spec.model, WeightFunction.gaussian(1))
    # u = 1 - t: trapezoid of (1 - t)^2 is 1/3 + dt^2/6, times the weight mass on [-3, 3]
    mass = erf(3.0 / np.sqrt(2.0))
    assert n.l2 == pytest.approx(mass * (1.0 / 3.0 + 0.02 ** 2 / 6.0), rel=1e-4)
    assert n.sigma_grad == 0.0 and n.grad == pytest.approx(0.0, abs=1e-20)
    assert np.isfinite(n.h_norm)


def test_supersolution_representation_on_martingale():
    tg = TimeGrid(0.0, 1.0, 50)
    env = build_environment(tg, 5000, (1, 1), 7, 11)
    spec = get_model("martingale")
    fld = solve_value_function(spec.model, env, SpaceGrid.uniform(1, 6.0, 121), spec.controls)
    rep = check_supersolution_representation(fld, spec.model, env, 0, 0.0)
    assert rep.passed
    assert rep.z_error <= 0.1 and rep.z_scale == pytest.approx(1.0, abs=1e-6)


def test_representation_warns_near_grid_edge():
    tg = TimeGrid(0.0, 1.0, 10)
    env = build_environment(tg, 500, (1, 1), 7, 11)
    spec = get_model("martingale")
    fld = solve_value_function(spec.model, env, SpaceGrid.uniform(1, 1.0, 21), spec.controls)
    with pytest.warns(RuntimeWarning, match="edge"):
        check_supersolution_representation(fld, spec.model, env, 0, 0.0, levels=[1.0, 4.0, 16.0])
