"""Local cubic-convolution interpolation onto an inducing grid (``f = M u``).

Each input gets a row of at most ``4^D`` nonzeros: per dimension, Keys cubic
convolution weights (``a = -0.5``) on the four nearest grid nodes, or linear
weights when the input falls in the first or last grid cell. The combined row
is the Kronecker (outer) product of the per-dimension weight vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.errors import OutOfGridError
from src.kernels.grid import InducingGrid

KEYS_A = -0.5
SUPPORT = 4
_BOUNDS_TOL = 1e-12


def keys_kernel(t: np.ndarray) -> np.ndarray:
    """Keys cubic convolution kernel with ``a = -0.5``."""

    a = KEYS_A
    s = np.abs(t)
    inner = (a + 2.0) * s**3 - (a + 3.0) * s**2 + 1.0
    outer = a * s**3 - 5.0 * a * s**2 + 8.0 * a * s - 4.0 * a
    return np.where(s <= 1.0, inner, np.where(s < 2.0, outer, 0.0))


def keys_kernel_deriv(t: np.ndarray) -> np.ndarray:
    a = KEYS_A
    s = np.abs(t)
    inner = 3.0 * (a + 2.0) * s**2 - 2.0 * (a + 3.0) * s
    outer = 3.0 * a * s**2 - 10.0 * a * s + 8.0 * a
    return np.sign(t) * np.where(s <= 1.0, inner, np.where(s < 2.0, outer, 0.0))


@dataclass(frozen=True)
class InterpWeights:
    """Interpolation row of a single input point."""

    support_start: Tuple[int, ...]
    dim_weights: Tuple[np.ndarray, ...]
    indices: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class InterpRows:
    """Interpolation rows of a batch of inputs.

    ``indices`` and ``weights`` have shape ``(n, 4^D)``; ``dweights`` (when
    requested) has shape ``(n, 4^D, D)`` and holds the derivative of each
    weight w.r.t. each input coordinate.
    """

    grid_size: int
    indices: np.ndarray
    weights: np.ndarray
    dweights: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return int(self.indices.shape[0])


def _dim_weights(
    x: np.ndarray, lo: float, hi: float, size: int, dim: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Support start, 4 weights and 4 weight derivatives for one dimension."""

    spacing = (hi - lo) / (size - 1)
    tol = _BOUNDS_TOL * max(1.0, abs(lo), abs(hi))
    bad = ~np.isfinite(x) | (x < lo - tol) | (x > hi + tol)
    if np.any(bad):
        value = float(x[np.argmax(bad)])
        raise OutOfGridError(dim, value, lo, hi)

    t = np.clip((x - lo) / spacing, 0.0, size - 1.0)
    cell = np.minimum(np.floor(t).astype(np.int64), size - 2)
    s = t - cell

    n = x.shape[0]
    weights = np.zeros((n, SUPPORT))
    dweights = np.zeros((n, SUPPORT))
    start = cell - 1

    first = cell == 0
    last = cell == size - 2
    interior = ~(first | last)

    offsets = np.arange(-1, 3)
    rel = s[interior, None] - offsets[None, :]
    weights[interior] = keys_kernel(rel)
    dweights[interior] = keys_kernel_deriv(rel)

    start[first] = 0
    weights[first, 0] = 1.0 - s[first]
    weights[first, 1] = s[first]
    dweights[first, 0] = -1.0
    dweights[first, 1] = 1.0

    # size == 4 makes the first cell also the middle one; first takes precedence
    last_only = last & ~first
    start[last_only] = size - 4
    weights[last_only, 2] = 1.0 - s[last_only]
    weights[last_only, 3] = s[last_only]
    dweights[last_only, 2] = -1.0
    dweights[last_only, 3] = 1.0

    return start, weights, dweights / spacing


def interp_rows(grid: InducingGrid, points: np.ndarray, with_grad: bool = False) -> InterpRows:
    """Interpolation rows for a batch of points of shape ``(n, D)``.

    Raises:
        OutOfGridError: If any coordinate lies outside the grid bounds.
    """

    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None] if grid.ndim == 1 else points[None, :]
    if points.shape[1] != grid.ndim:
        raise ValueError(f"points have {points.shape[1]} columns but grid has {grid.ndim} dims")

    n = points.shape[0]
    indices = np.zeros((n, 1), dtype=np.int64)
    weights = np.ones((n, 1))
    per_dim_w = []
    per_dim_dw = []
    for d, (g, stride) in enumerate(zip(grid.dims, grid.strides)):
        start, w, dw = _dim_weights(points[:, d], g.lo, g.hi, g.size, d)
        local = (start[:, None] + np.arange(SUPPORT)[None, :]) * stride
        indices = (indices[:, :, None] + local[:, None, :]).reshape(n, -1)
        weights = (weights[:, :, None] * w[:, None, :]).reshape(n, -1)
        per_dim_w.append(w)
        per_dim_dw.append(dw)

    dweights = None
    if with_grad:
        dweights = np.empty((n, SUPPORT**grid.ndim, grid.ndim))
        for d in range(grid.ndim):
            acc = np.ones((n, 1))
            for e in range(grid.ndim):
                factor = per_dim_dw[e] if e == d else per_dim_w[e]
                acc = (acc[:, :, None] * factor[:, None, :]).reshape(n, -1)
            dweights[:, :, d] = acc
    return InterpRows(grid.size, indices, weights, dweights)


def interp_row(grid: InducingGrid, x: np.ndarray) -> InterpWeights:
    """Interpolation row of a single point ``x`` in ``R^D``."""

    x = np.atleast_1d(np.asarray(x, dtype=float))
    starts = []
    dim_weights = []
    for d, g in enumerate(grid.dims):
        start, w, _ = _dim_weights(x[d : d + 1], g.lo, g.hi, g.size, d)
        starts.append(int(start[0]))
        dim_weights.append(w[0])
    rows = interp_rows(grid, x[None, :])
    return InterpWeights(tuple(starts), tuple(dim_weights), rows.indices[0], rows.weights[0])


def interp_row_grad(grid: InducingGrid, x: np.ndarray) -> np.ndarray:
    """Derivative of the combined row weights w.r.t. each coordinate, shape ``(4^D, D)``."""

    x = np.atleast_1d(np.asarray(x, dtype=float))
    rows = interp_rows(grid, x[None, :], with_grad=True)
    assert rows.dweights is not None
    return rows.dweights[0]


def _check_indices(rows: InterpRows, m: int) -> None:
    if rows.grid_size != m:
        raise ValueError(f"vector length {m} does not match grid size {rows.grid_size}")
    if rows.indices.size and (rows.indices.min() < 0 or rows.indices.max() >= m):
        raise RuntimeError("interpolation index out of range")


def apply_m(rows: InterpRows, u: np.ndarray) -> np.ndarray:
    """``f = M u`` for the batch described by ``rows``."""

    u = np.asarray(u, dtype=float)
    _check_indices(rows, u.shape[0])
    return np.einsum("nk,nk->n", rows.weights, u[rows.indices])


def apply_m_transpose(rows: InterpRows, v: np.ndarray) -> np.ndarray:
    """Scatter-add adjoint ``M^T v``."""

    v = np.asarray(v, dtype=float)
    if v.shape[0] != rows.n:
        raise ValueError(f"vector length {v.shape[0]} does not match batch size {rows.n}")
    _check_indices(rows, rows.grid_size)
    contrib = rows.weights * v[:, None]
    return np.bincount(rows.indices.ravel(), weights=contrib.ravel(), minlength=rows.grid_size)


def apply_m_grad(rows: InterpRows, u: np.ndarray) -> np.ndarray:
    """``df_i / dx_{i,d}`` for each point and coordinate, shape ``(n, D)``."""

    if rows.dweights is None:
        raise ValueError("rows were built without derivatives")
    u = np.asarray(u, dtype=float)
    _check_indices(rows, u.shape[0])
    return np.einsum("nkd,nk->nd", rows.dweights, u[rows.indices])


def dense_rows(rows: InterpRows) -> np.ndarray:
    """Materialize ``M`` as an ``(n, m)`` array (small batches only)."""

    out = np.zeros((rows.n, rows.grid_size))
    row_ids = np.repeat(np.arange(rows.n), rows.indices.shape[1])
    np.add.at(out, (row_ids, rows.indices.ravel()), rows.weights.ravel())
    return out
