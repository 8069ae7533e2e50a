"""Tests for inducing grids and RBF kernel factors."""

import numpy as np
import pytest

from src.kernels.grid import Grid1D, InducingGrid, build_grid
from src.kernels.rbf import RbfParams, kernel_factors, rbf_factor, rbf_factor_grad
from tests.oracle import dense_kron, finite_diff


def test_grid_layout_is_row_major() -> None:
    grid = InducingGrid((Grid1D(0.0, 1.0, 4), Grid1D(-1.0, 1.0, 5), Grid1D(0.0, 2.0, 6)))
    assert grid.shape == (4, 5, 6)
    assert grid.size == 120
    assert grid.strides == (30, 6, 1)
    assert grid.dims[1].spacing == pytest.approx(0.5)


def test_grid_rejects_bad_bounds_and_sizes() -> None:
    with pytest.raises(ValueError):
        Grid1D(1.0, 1.0, 8)
    with pytest.raises(ValueError):
        Grid1D(0.0, 1.0, 3)
    with pytest.raises(ValueError):
        InducingGrid(tuple(Grid1D(0.0, 1.0, 4) for _ in range(4)))


def test_build_grid_adds_margin() -> None:
    grid = build_grid([0.0, -2.0], [1.0, 2.0], [8, 10], margin=0.1)
    assert grid.dims[0].lo == pytest.approx(-0.1)
    assert grid.dims[0].hi == pytest.approx(1.1)
    assert grid.dims[1].lo == pytest.approx(-2.4)
    assert grid.shape == (8, 10)


def test_build_grid_widens_degenerate_range() -> None:
    grid = build_grid([3.0], [3.0], [8])
    assert grid.dims[0].lo == pytest.approx(2.5)
    assert grid.dims[0].hi == pytest.approx(3.5)


def test_build_grid_validates_arguments() -> None:
    with pytest.raises(ValueError):
        build_grid([0.0], [1.0, 2.0], [8])
    with pytest.raises(ValueError):
        build_grid([1.0], [0.0], [8])


def test_rbf_factors_form_the_full_kernel() -> None:
    grid = InducingGrid((Grid1D(0.0, 1.0, 4), Grid1D(0.0, 2.0, 5)))
    params = RbfParams(np.log([0.3, 0.7]), np.log(2.5))
    full = dense_kron(kernel_factors(grid, params))

    coords = np.array([[a, b] for a in grid.dims[0].points for b in grid.dims[1].points])
    diff = (coords[:, None, :] - coords[None, :, :]) / params.lengthscale
    expected = 2.5 * np.exp(-0.5 * np.sum(diff**2, axis=-1))
    np.testing.assert_allclose(full, expected, rtol=1e-12)
    assert np.allclose(np.diag(full), params.signal_var)


def test_rbf_factor_gradients_match_finite_differences() -> None:
    g = Grid1D(-1.0, 1.0, 6)
    params = RbfParams(np.log([0.4, 0.2]), np.log(1.7))
    d_ell, d_var = rbf_factor_grad(g, params, 0)

    def factor_of_ell(theta):
        return rbf_factor(g, RbfParams(np.array([theta[0], np.log(0.2)]), params.log_signal_var), 0)

    def factor_of_var(theta):
        return rbf_factor(g, RbfParams(params.log_lengthscale, float(theta[0])), 0)

    for p in range(g.size):
        for q in range(g.size):
            fd_ell = finite_diff(lambda t: factor_of_ell(t)[p, q], params.log_lengthscale[:1])
            fd_var = finite_diff(lambda t: factor_of_var(t)[p, q], np.array([np.log(1.7)]))
            assert d_ell[p, q] == pytest.approx(fd_ell[0], abs=1e-7)
            assert d_var[p, q] == pytest.approx(fd_var[0], abs=1e-7)


def test_rbf_params_must_be_finite() -> None:
    with pytest.raises(ValueError):
        RbfParams(np.array([np.nan]), 0.0)
    with pytest.raises(ValueError):
        kernel_factors(InducingGrid((Grid1D(0.0, 1.0, 4),)), RbfParams(np.zeros(2), 0.0))


def test_default_lengthscale_is_tenth_of_range() -> None:
    grid = InducingGrid((Grid1D(-1.0, 1.0, 16),))
    assert RbfParams.default_for(grid).lengthscale[0] == pytest.approx(0.2)
