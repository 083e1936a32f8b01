import numpy as np
import pytest

import oracles as o


@pytest.mark.parametrize("center", o.EQUIVALENCE_CENTERS)
def test_frozen_equivalence_ratios_regenerate(center):
    for s in o.EQUIVALENCE_TIMES:
        fresh = o.gaussian_equivalence_ratio(center, 1.0, s)
        assert fresh == pytest.approx(o.EQUIVALENCE_RATIOS[(center, s)], abs=1e-12)


def test_gauss_hermite_convolution_matches_gaussian_identity():
    for center in o.EQUIVALENCE_CENTERS:
        for s in o.EQUIVALENCE_TIMES:
            assert o.gaussian_equivalence_ratio(center, 1.0, s) == pytest.approx(
                o.gaussian_equivalence_ratio_closed(center, 1.0, s), abs=1e-9)


def test_frozen_sup_moments_regenerate():
    for k, (mean, se) in o.SUP_MOMENT.items():
        fresh = o.random_walk_sup_moment(k)
        assert fresh[0] == pytest.approx(mean, abs=1e-12)
        assert fresh[1] == pytest.approx(se, abs=1e-12)


def test_linear_closed_form_agrees_with_fine_recursion():
    fine, exact = o.linear_fine_grid(0.5, 0.3, 1.0, 1.0)
    assert np.max(np.abs(fine / exact - 1.0)) < 5e-3


def test_linear_fine_recursion_converges_at_first_order():
    errs = []
    for n in (2 ** 8, 2 ** 10, 2 ** 12):
        fine, exact = o.linear_fine_grid(0.5, 0.3, 1.0, 1.0, n_steps=n, paths=400, seed=5)
        errs.append(np.mean(np.abs(fine - exact)))
    assert errs[2] < errs[1] < errs[0]


def test_nested_martingale_oracle():
    mean, se = o.martingale_nested(0.3, 1.0, 1.0)
    assert abs(mean - 0.3) <= 4 * se


def test_snell_deterministic():
    assert o.snell_deterministic(0.0) == (1.0, 1.0)
    assert o.snell_deterministic(0.25) == (0.75, 0.75)
