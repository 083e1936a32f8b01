import warnings

import numpy as np
import pytest

from bdsoc import RegressionBasis, SpaceGrid
from bdsoc.regression import RegressionWarning


def test_polynomial_projection_reproduces_polynomials(rng):
    x = rng.normal(size=(500, 1))
    target = 1.0 + 2.0 * x[:, 0] - 0.5 * x[:, 0] ** 2
    fit = RegressionBasis("polynomial", 2).projector(x)(target)
    assert np.allclose(fit, target, atol=1e-10)


def test_polynomial_projection_two_dimensions(rng):
    x = rng.normal(size=(500, 2))
    target = x[:, 0] * x[:, 1] + x[:, 1] ** 2
    assert np.allclose(RegressionBasis(degree=2).projector(x)(target), target, atol=1e-10)


def test_projection_is_idempotent(rng):
    x = rng.normal(size=(300, 1))
    p = RegressionBasis(degree=3).projector(x)
    y = np.sin(3 * x[:, 0]) + rng.normal(size=300)
    once = p(y)
    assert np.allclose(p(once), once, atol=1e-10)


def test_projection_handles_multiple_columns(rng):
    x = rng.normal(size=(200, 1))
    p = RegressionBasis().projector(x)
    y = rng.normal(size=(200, 3))
    fit = p(y)
    assert fit.shape == (200, 3)
    assert np.allclose(fit[:, 1], p(y[:, 1]))


def test_constant_states_reduce_to_sample_mean(rng):
    x = np.zeros((100, 1))
    y = rng.normal(size=100)
    assert np.allclose(RegressionBasis().projector(x)(y), y.mean())


def test_rank_deficient_design_falls_back_to_cells():
    x = np.repeat(np.array([[0.0], [1.0]]), 50, axis=0)
    y = np.concatenate([np.zeros(50), np.ones(50)])
    with pytest.warns(RegressionWarning):
        p = RegressionBasis(degree=4).projector(x)
    assert p.kind == "cells"
    assert np.allclose(p(y), y)


def test_cells_average_within_cells():
    grid = SpaceGrid.uniform(1, 1.0, 4)  # three cells
    x = np.array([[-0.9], [-0.8], [0.1], [0.2], [0.9]])
    y = np.array([1.0, 3.0, 5.0, 7.0, 11.0])
    fit = RegressionBasis("cells", grid=grid).projector(x)(y)
    assert fit.tolist() == [2.0, 2.0, 6.0, 6.0, 11.0]


def test_basis_rejects_unknown():
    with pytest.raises(ValueError):
        RegressionBasis("splines")
    with pytest.raises(ValueError):
        RegressionBasis(degree=-1)


def test_no_warning_on_regular_design(rng):
    x = rng.normal(size=(100, 1))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        RegressionBasis().projector(x)
