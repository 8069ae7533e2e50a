"""RBF base kernel factors on inducing grids.

The signal variance is split evenly across the D factors, ``sigma_d^2 =
(sigma^2)^(1/D)``, so the Kronecker product carries the total variance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.kernels.grid import Grid1D, InducingGrid


@dataclass(frozen=True)
class RbfParams:
    """Log-space RBF hyperparameters of one GP."""

    log_lengthscale: np.ndarray
    log_signal_var: float

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "log_lengthscale", np.atleast_1d(np.asarray(self.log_lengthscale, dtype=float))
        )
        if not np.all(np.isfinite(self.log_lengthscale)) or not np.isfinite(self.log_signal_var):
            raise ValueError("RBF hyperparameters must be finite")

    @property
    def ndim(self) -> int:
        return int(self.log_lengthscale.shape[0])

    @property
    def lengthscale(self) -> np.ndarray:
        return np.exp(self.log_lengthscale)

    @property
    def signal_var(self) -> float:
        return float(np.exp(self.log_signal_var))

    @classmethod
    def default_for(cls, grid: InducingGrid, signal_var: float = 1.0) -> "RbfParams":
        """Lengthscale of one tenth of each grid range, unit signal variance."""

        ranges = np.array([g.hi - g.lo for g in grid.dims])
        return cls(np.log(ranges / 10.0), float(np.log(signal_var)))


def _sq_dists(g: Grid1D) -> np.ndarray:
    z = g.points
    return (z[:, None] - z[None, :]) ** 2


def rbf_factor(g: Grid1D, p: RbfParams, d: int) -> np.ndarray:
    """Kernel factor ``K_d[p, q] = sigma_d^2 exp(-(z_p - z_q)^2 / (2 l_d^2))``."""

    if not 0 <= d < p.ndim:
        raise ValueError(f"dimension index {d} out of range for {p.ndim} lengthscales")
    ell = float(np.exp(p.log_lengthscale[d]))
    factor_var = float(np.exp(p.log_signal_var / p.ndim))
    return factor_var * np.exp(-0.5 * _sq_dists(g) / ell**2)


def rbf_factor_grad(g: Grid1D, p: RbfParams, d: int) -> Tuple[np.ndarray, np.ndarray]:
    """Derivatives of ``rbf_factor`` w.r.t. ``log_lengthscale[d]`` and ``log_signal_var``."""

    k = rbf_factor(g, p, d)
    ell = float(np.exp(p.log_lengthscale[d]))
    d_log_lengthscale = k * _sq_dists(g) / ell**2
    d_log_signal_var = k / p.ndim
    return d_log_lengthscale, d_log_signal_var


def kernel_factors(grid: InducingGrid, p: RbfParams) -> Tuple[np.ndarray, ...]:
    """All per-dimension factors of ``K_{Z,Z}``."""

    if grid.ndim != p.ndim:
        raise ValueError(f"grid has {grid.ndim} dimensions but kernel has {p.ndim}")
    return tuple(rbf_factor(g, p, d) for d, g in enumerate(grid.dims))
