"""Tests for cubic interpolation onto the inducing grid."""

import numpy as np
import pytest

from src.errors import OutOfGridError
from src.gp.interpolation import (
    apply_m,
    apply_m_grad,
    apply_m_transpose,
    dense_rows,
    interp_row,
    interp_row_grad,
    interp_rows,
    keys_kernel,
)
from src.kernels.grid import Grid1D, InducingGrid
from src.kernels.rbf import RbfParams, rbf_factor
from tests.oracle import dense_m, finite_diff


def _grid(ndim: int) -> InducingGrid:
    sizes = (7, 6, 5)
    return InducingGrid(tuple(Grid1D(-1.0, 1.0 + 0.5 * d, sizes[d]) for d in range(ndim)))


def _inside(grid: InducingGrid, n: int, rng: np.random.Generator) -> np.ndarray:
    return np.column_stack([rng.uniform(g.lo, g.hi, n) for g in grid.dims])


def test_keys_kernel_values() -> None:
    np.testing.assert_allclose(keys_kernel(np.array([0.0, 1.0, 2.0, 2.5])), [1.0, 0.0, 0.0, 0.0])
    assert float(keys_kernel(np.array([0.5]))[0]) == pytest.approx(0.5625)
    assert float(keys_kernel(np.array([1.5]))[0]) == pytest.approx(-0.0625)


@pytest.mark.parametrize("ndim", [1, 2, 3])
def test_rows_match_dense_assembly(ndim) -> None:
    rng = np.random.default_rng(ndim)
    grid = _grid(ndim)
    points = _inside(grid, 20, rng)
    rows = interp_rows(grid, points)
    assert rows.indices.shape == (20, 4**ndim)
    np.testing.assert_allclose(dense_rows(rows), dense_m(grid, points), atol=1e-13)


@pytest.mark.parametrize("ndim", [1, 2, 3])
def test_rows_sum_to_one(ndim) -> None:
    rng = np.random.default_rng(10 + ndim)
    grid = _grid(ndim)
    rows = interp_rows(grid, _inside(grid, 50, rng))
    np.testing.assert_allclose(rows.weights.sum(axis=1), 1.0, atol=1e-12)


def test_grid_nodes_are_interpolated_exactly() -> None:
    grid = _grid(2)
    z0, z1 = grid.dims[0].points, grid.dims[1].points
    nodes = np.array([[a, b] for a in z0 for b in z1])
    m = dense_rows(interp_rows(grid, nodes))
    np.testing.assert_allclose(m, np.eye(grid.size), atol=1e-12)


def test_quadratics_are_reproduced_in_interior_cells() -> None:
    g = Grid1D(0.0, 1.0, 11)
    grid = InducingGrid((g,))
    u = 3.0 * g.points**2 - g.points + 0.5
    x = np.array([0.15, 0.33, 0.5, 0.61, 0.87])
    f = apply_m(interp_rows(grid, x), u)
    np.testing.assert_allclose(f, 3.0 * x**2 - x + 0.5, atol=1e-12)


def test_edge_cells_reproduce_linear_functions() -> None:
    g = Grid1D(0.0, 1.0, 11)
    grid = InducingGrid((g,))
    u = 2.0 * g.points - 1.0
    x = np.array([0.0, 0.04, 0.95, 1.0])
    np.testing.assert_allclose(apply_m(interp_rows(grid, x), u), 2.0 * x - 1.0, atol=1e-12)


def test_transpose_is_adjoint() -> None:
    rng = np.random.default_rng(4)
    grid = _grid(2)
    rows = interp_rows(grid, _inside(grid, 9, rng))
    u = rng.standard_normal(grid.size)
    v = rng.standard_normal(9)
    assert float(v @ apply_m(rows, u)) == pytest.approx(float(apply_m_transpose(rows, v) @ u))


@pytest.mark.parametrize("ndim", [1, 2])
def test_coordinate_gradient_matches_finite_differences(ndim) -> None:
    rng = np.random.default_rng(20 + ndim)
    grid = _grid(ndim)
    u = rng.standard_normal(grid.size)
    points = _inside(grid, 6, rng)
    rows = interp_rows(grid, points, with_grad=True)
    analytic = apply_m_grad(rows, u)
    for i, p in enumerate(points):
        fd = finite_diff(lambda x: float(apply_m(interp_rows(grid, x[None, :]), u)[0]), p)
        np.testing.assert_allclose(analytic[i], fd, rtol=1e-5, atol=1e-6)


def test_single_point_helpers_agree_with_batch() -> None:
    grid = _grid(2)
    x = np.array([0.1, 0.7])
    row = interp_row(grid, x)
    batch = interp_rows(grid, x[None, :], with_grad=True)
    np.testing.assert_array_equal(row.indices, batch.indices[0])
    np.testing.assert_allclose(interp_row_grad(grid, x), batch.dweights[0])
    np.testing.assert_allclose(
        np.kron(row.dim_weights[0], row.dim_weights[1]), row.weights, atol=1e-15
    )


def test_out_of_grid_inputs_are_rejected() -> None:
    grid = _grid(2)
    with pytest.raises(OutOfGridError) as excinfo:
        interp_rows(grid, np.array([[0.0, 9.0]]))
    assert excinfo.value.dim == 1
    with pytest.raises(OutOfGridError):
        interp_rows(grid, np.array([[np.nan, 0.0]]))


def test_gradient_requires_rows_built_with_grad() -> None:
    grid = _grid(1)
    rows = interp_rows(grid, np.array([0.2]))
    with pytest.raises(ValueError):
        apply_m_grad(rows, np.zeros(grid.size))


def _smooth(grid: InducingGrid, points: np.ndarray):
    nodes = [g.points for g in grid.dims]
    values = np.sin(3.0 * nodes[0])
    exact = np.sin(3.0 * points[:, 0])
    if grid.ndim == 2:
        values = np.outer(values, np.cos(2.0 * nodes[1]))
        exact = exact * np.cos(2.0 * points[:, 1])
    return values.ravel(), exact


@pytest.mark.parametrize("ndim", [1, 2])
def test_error_falls_at_second_order_under_refinement(ndim) -> None:
    axis = np.linspace(-1.0 + 1e-9, 1.0 - 1e-9, 2001 if ndim == 1 else 161)
    points = np.stack(np.meshgrid(*([axis] * ndim), indexing="ij"), axis=-1).reshape(-1, ndim)
    errors = []
    for size in (17, 33, 65):
        grid = InducingGrid(tuple(Grid1D(-1.0, 1.0, size) for _ in range(ndim)))
        values, exact = _smooth(grid, points)
        errors.append(np.max(np.abs(apply_m(interp_rows(grid, points), values) - exact)))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(orders >= 1.8)


def test_interpolated_kernel_matches_exact_kernel() -> None:
    g = Grid1D(-1.2, 1.2, 160)
    grid = InducingGrid((g,))
    params = RbfParams(np.log(np.array([0.2])), 0.0)
    x = np.random.default_rng(9).uniform(-1.0, 1.0, size=(60, 1))
    m = dense_m(grid, x)
    approx = m @ rbf_factor(g, params, 0) @ m.T
    exact = np.exp(-0.5 * (x - x.T) ** 2 / 0.2**2)
    assert np.linalg.norm(approx - exact) / np.linalg.norm(exact) < 1e-3
