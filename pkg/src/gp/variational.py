"""Additive-layer GP units with Kronecker-structured variational posteriors.

Each unit holds ``q(u) = N(mu, S)`` with ``S = L L^T`` and ``L = ⊗ L_d``.
Samples are drawn as ``u = mu + L eps``; the KL to the grid prior
``N(0, ⊗K_d)`` and all its gradients only touch the small factors.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import expit

from src.gp.interpolation import InterpRows, apply_m, apply_m_transpose
from src.kernels.grid import InducingGrid
from src.kernels.rbf import RbfParams, kernel_factors, rbf_factor_grad
from src.linalg.kron import (
    KroneckerLower,
    KroneckerPSD,
    factor_chol,
    factor_traces,
    kron_apply,
    kron_inv_trace,
    kron_logdet,
    kron_lower_logdet,
    kron_mvm,
    kron_solve,
    kron_solve_quadform,
    softplus,
    softplus_inverse,
)


@dataclass(frozen=True)
class VariationalState:
    """Variational mean and Kronecker Cholesky factors of one GP.

    ``raw_factors`` are lower triangular; their diagonals are unconstrained
    and mapped through softplus when read.
    """

    mu: np.ndarray
    raw_factors: Tuple[np.ndarray, ...]

    @property
    def size(self) -> int:
        return int(self.mu.shape[0])

    @cached_property
    def l_factors(self) -> KroneckerLower:
        factors = []
        for raw in self.raw_factors:
            lower = np.tril(raw, -1)
            lower[np.diag_indices_from(lower)] = softplus(np.diag(raw))
            factors.append(lower)
        return KroneckerLower(tuple(factors))

    @classmethod
    def from_lower(cls, mu: np.ndarray, lowers: Sequence[np.ndarray]) -> "VariationalState":
        """Build a state whose softplus-mapped factors equal ``lowers``."""

        raws = []
        for lower in lowers:
            raw = np.tril(np.asarray(lower, dtype=float), -1)
            raw[np.diag_indices_from(raw)] = softplus_inverse(np.diag(lower))
            raws.append(raw)
        mu = np.asarray(mu, dtype=float).copy()
        state = cls(mu, tuple(raws))
        if state.l_factors.size != mu.shape[0]:
            raise ValueError("mean length does not match the product of factor sizes")
        return state

    @classmethod
    def at_prior(cls, grid: InducingGrid, kernel: RbfParams) -> "VariationalState":
        """``mu = 0`` and ``L_d = chol(K_d)`` so that ``S`` matches the prior."""

        lowers = [
            factor_chol(k, name=f"K_{d}").lower
            for d, k in enumerate(kernel_factors(grid, kernel))
        ]
        return cls.from_lower(np.zeros(grid.size), lowers)

    def raw_grad(self, grad_l: Sequence[np.ndarray]) -> Tuple[np.ndarray, ...]:
        """Chain gradients w.r.t. the mapped factors onto the raw parameters."""

        out = []
        for raw, g in zip(self.raw_factors, grad_l):
            g = np.tril(g)
            g[np.diag_indices_from(g)] *= expit(np.diag(raw))
            out.append(g)
        return tuple(out)


@dataclass(frozen=True)
class GpUnit:
    """One GP of the additive layer, reading ``feature_subset`` of the features."""

    grid: InducingGrid
    kernel: RbfParams
    vstate: VariationalState
    feature_subset: Tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.feature_subset) != self.grid.ndim:
            raise ValueError(
                f"feature subset {self.feature_subset} does not match "
                f"grid dimension {self.grid.ndim}"
            )
        if self.kernel.ndim != self.grid.ndim:
            raise ValueError("kernel and grid dimensions differ")
        if self.vstate.size != self.grid.size:
            raise ValueError("variational state size does not match the grid")

    @cached_property
    def prior(self) -> KroneckerPSD:
        factors = kernel_factors(self.grid, self.kernel)
        return KroneckerPSD(factors, names=tuple(f"K_{d}" for d in range(len(factors))))


@dataclass(frozen=True)
class KernelGrad:
    """Gradient over ``RbfParams``."""

    d_log_lengthscale: np.ndarray
    d_log_signal_var: float


def sample_u(vs: VariationalState, eps: np.ndarray) -> np.ndarray:
    """Reparameterized sample ``u = mu + (⊗L_d) eps``."""

    eps = np.asarray(eps, dtype=float)
    if eps.shape[0] != vs.size:
        raise ValueError(f"noise length {eps.shape[0]} does not match state size {vs.size}")
    return vs.mu + kron_mvm(vs.l_factors.factors, eps)


def latent_f(gp: GpUnit, rows: InterpRows, u: np.ndarray) -> np.ndarray:
    """Latent values ``f = M u`` at the batch inputs."""

    if rows.grid_size != gp.grid.size:
        raise ValueError("interpolation rows were built for a different grid")
    return apply_m(rows, u)


def kl_value(gp: GpUnit) -> float:
    """``KL[q(u) || N(0, K)]``.

    ``1/2 {log|K| - log|S| - m + tr(K^-1 S) + mu^T K^-1 mu}`` assembled from
    per-factor quantities.
    """

    k = gp.prior
    lower = gp.vstate.l_factors
    mu = gp.vstate.mu
    m = k.size
    quad = kron_solve_quadform(k, mu)
    return 0.5 * (
        kron_logdet(k)
        - kron_lower_logdet(lower)
        - m
        + kron_inv_trace(k, lower.covariance_factors())
        + quad
    )


def _others_product(values: Sequence[float], skip: int) -> float:
    return float(np.prod([v for i, v in enumerate(values) if i != skip]))


def _factor_kl_grad(
    k: KroneckerPSD,
    traces: Sequence[float],
    s_factors: Sequence[np.ndarray],
    alpha: np.ndarray,
    d: int,
    dk: np.ndarray,
) -> float:
    """KL derivative for a perturbation ``dk`` of factor ``d`` alone."""

    m = k.size
    dim = k.dims[d]
    ch = k.cholesky[d]
    kinv_dk = ch.solve(dk)
    t_logdet = (m / dim) * float(np.trace(kinv_dk))
    t_trace = _others_product(traces, d) * float(np.trace(kinv_dk @ ch.solve(s_factors[d])))
    # d(⊗K_e) = K_1 ⊗ ... ⊗ dK_d ⊗ ... ⊗ K_D, with the jittered K_e the solves use
    ops = [
        (lambda block, g=dk: g @ block)
        if e == d
        else (lambda block, g=ch_e.matrix(): g @ block)
        for e, ch_e in enumerate(k.cholesky)
    ]
    t_quad = float(alpha @ kron_apply(ops, k.dims, alpha))
    return 0.5 * (t_logdet - t_trace - t_quad)


def kl_grad_theta(gp: GpUnit) -> KernelGrad:
    """KL gradient w.r.t. the log-space RBF hyperparameters.

    A per-dimension parameter perturbs exactly one Kronecker factor, so every
    trace in the derivative splits into per-factor traces.
    """

    k = gp.prior
    s_factors = gp.vstate.l_factors.covariance_factors()
    traces = factor_traces(k, s_factors)
    alpha = kron_solve(k, gp.vstate.mu)
    ndim = gp.grid.ndim

    d_lengthscale = np.zeros(ndim)
    d_signal = 0.0
    for d, g in enumerate(gp.grid.dims):
        dk_ell, dk_var = rbf_factor_grad(g, gp.kernel, d)
        # the jitter is relative to the diagonal, so it scales with the signal variance
        dk_var = dk_var + (k.cholesky[d].jitter / ndim) * np.eye(g.size)
        d_lengthscale[d] = _factor_kl_grad(k, traces, s_factors, alpha, d, dk_ell)
        d_signal += _factor_kl_grad(k, traces, s_factors, alpha, d, dk_var)
    return KernelGrad(d_lengthscale, d_signal)


def kl_grad_variational(gp: GpUnit) -> Tuple[np.ndarray, Tuple[np.ndarray, ...]]:
    """KL gradients w.r.t. ``mu`` and the (mapped) lower factors ``L_d``.

    ``dKL/dL_d = -(m/m_d) L_d^{-T} + prod_{d' != d} tr(K_d'^-1 S_d') K_d^-1 L_d``,
    lower triangle taken.
    """

    k = gp.prior
    lower = gp.vstate.l_factors
    traces = factor_traces(k, lower.covariance_factors())
    m = k.size
    grad_mu = kron_solve(k, gp.vstate.mu)
    grads: List[np.ndarray] = []
    for d, (ch, l_d) in enumerate(zip(k.cholesky, lower.factors)):
        dim = l_d.shape[0]
        # lower triangle of L_d^{-T} is diag(1 / L_pp)
        logdet_term = np.diag(-(m / dim) / np.diag(l_d))
        trace_term = _others_product(traces, d) * ch.solve(l_d)
        grads.append(np.tril(logdet_term + trace_term))
    return grad_mu, tuple(grads)


def backprop_f_to_variational(
    rows: InterpRows,
    dl_df: np.ndarray,
    eps: np.ndarray,
    lower: KroneckerLower,
) -> Tuple[np.ndarray, Tuple[np.ndarray, ...]]:
    """Pathwise gradient of a likelihood term through ``f = M(mu + L eps)``.

    ``eps`` must be the noise used to draw the sample that produced ``f``.
    """

    dl_df = np.asarray(dl_df, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if eps.shape[0] != lower.size:
        raise ValueError(f"noise length {eps.shape[0]} does not match state size {lower.size}")
    g = apply_m_transpose(rows, dl_df)
    dims = lower.dims
    if len(dims) == 1:
        return g, (np.tril(np.outer(g, eps)),)

    g_tensor = g.reshape(dims)
    grads: List[np.ndarray] = []
    for d in range(len(dims)):
        ops = [
            (lambda block: block) if e == d else (lambda block, f=f: f @ block)
            for e, f in enumerate(lower.factors)
        ]
        y = kron_apply(ops, dims, eps).reshape(dims)
        others = [e for e in range(len(dims)) if e != d]
        grads.append(np.tril(np.tensordot(g_tensor, y, axes=(others, others))))
    return g, tuple(grads)
