"""Kronecker-product linear algebra over small dense per-dimension factors.

A Kronecker matrix ``K = K_1 ⊗ K_2 ⊗ ... ⊗ K_D`` is never materialized. Vectors
of length ``m = prod(m_d)`` are viewed as row-major tensors of shape
``(m_1, ..., m_D)`` so that the first factor acts on the slowest axis, which is
the layout produced by ``numpy.kron``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky

from src.errors import NotPositiveDefiniteError

logger = logging.getLogger(__name__)

DEFAULT_JITTERS: Tuple[float, ...] = (0.0, 1e-10, 1e-8, 1e-6)

FactorOp = Callable[[np.ndarray], np.ndarray]


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def softplus_inverse(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("softplus_inverse requires strictly positive values")
    # log(expm1(y)) written to stay finite for large y
    return y + np.log(-np.expm1(-y))


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower Cholesky factor of ``a + jitter * I``."""

    lower: np.ndarray
    jitter: float
    name: str = "factor"

    def solve(self, b: np.ndarray) -> np.ndarray:
        return cho_solve((self.lower, True), b, check_finite=False)

    def logdet(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self.lower))))

    def matrix(self) -> np.ndarray:
        """The factored matrix ``a + jitter * I``."""

        return self.lower @ self.lower.T


@dataclass(frozen=True)
class KroneckerPSD:
    """Positive-definite matrix stored as a Kronecker product of symmetric factors."""

    factors: Tuple[np.ndarray, ...]
    names: Tuple[str, ...] = field(default=())
    jitters: Sequence[float] = DEFAULT_JITTERS

    def __post_init__(self) -> None:
        for idx, factor in enumerate(self.factors):
            if factor.ndim != 2 or factor.shape[0] != factor.shape[1]:
                raise ValueError(f"factor {idx} must be square, got shape {factor.shape}")

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(int(f.shape[0]) for f in self.factors)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def _name(self, idx: int) -> str:
        return self.names[idx] if idx < len(self.names) else f"K_{idx}"

    @cached_property
    def cholesky(self) -> Tuple[CholeskyFactor, ...]:
        """Per-factor Cholesky decompositions (computed once)."""

        return tuple(
            factor_chol(f, self.jitters, name=self._name(idx))
            for idx, f in enumerate(self.factors)
        )


@dataclass(frozen=True)
class KroneckerLower:
    """Kronecker product of lower-triangular factors ``L = ⊗ L_d``."""

    factors: Tuple[np.ndarray, ...]

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(int(f.shape[0]) for f in self.factors)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def covariance_factors(self) -> Tuple[np.ndarray, ...]:
        """Factors ``S_d = L_d L_d^T`` of the implied covariance."""

        return tuple(f @ f.T for f in self.factors)

    def transposed(self) -> Tuple[np.ndarray, ...]:
        return tuple(f.T for f in self.factors)


def _check_length(dims: Sequence[int], v: np.ndarray) -> None:
    m = int(np.prod(dims))
    if v.shape[0] != m:
        raise ValueError(f"vector length {v.shape[0]} does not match Kronecker size {m}")


def kron_apply(ops: Sequence[FactorOp], dims: Sequence[int], v: np.ndarray) -> np.ndarray:
    """Apply per-factor linear operators to ``v`` along each tensor axis.

    ``ops[d]`` maps an ``(m_d, k)`` matrix to an ``(m_d, k)`` matrix. ``v`` is
    either a vector of length ``prod(dims)`` or a matrix with that many rows,
    in which case every column is transformed.
    """

    v = np.asarray(v, dtype=float)
    _check_length(dims, v)
    trailing = v.shape[1:]
    n_trailing = int(np.prod(trailing)) if trailing else 1
    x = v.reshape(tuple(dims) + (n_trailing,))
    for axis, op in enumerate(ops):
        moved = np.moveaxis(x, axis, 0)
        shape = moved.shape
        out = op(moved.reshape(shape[0], -1))
        x = np.moveaxis(out.reshape(shape), 0, axis)
    return x.reshape(v.shape)


def kron_mvm(factors: Sequence[np.ndarray], v: np.ndarray) -> np.ndarray:
    """Return ``(⊗ factors) v`` without materializing the Kronecker product.

    Cost is ``O(m * sum(m_d))`` per column.

    Raises:
        ValueError: If ``v`` does not have ``prod(m_d)`` rows.
    """

    dims = [int(f.shape[1]) for f in factors]
    for idx, f in enumerate(factors):
        if f.ndim != 2 or f.shape[0] != f.shape[1]:
            raise ValueError(f"factor {idx} must be square, got shape {f.shape}")
    ops = [(lambda block, f=f: f @ block) for f in factors]
    return kron_apply(ops, dims, v)


def factor_chol(
    a: np.ndarray,
    jitter_schedule: Optional[Sequence[float]] = None,
    name: str = "factor",
) -> CholeskyFactor:
    """Cholesky factor of ``a + jitter * I`` for the first jitter that succeeds.

    Jitters are relative: each is scaled by the mean of ``diag(a)``.

    Raises:
        NotPositiveDefiniteError: If every jitter in the schedule fails.
    """

    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefiniteError(name, [])
    schedule = DEFAULT_JITTERS if jitter_schedule is None else tuple(jitter_schedule)
    scale = float(np.mean(np.diag(a))) if a.size else 1.0
    if scale <= 0:
        scale = 1.0
    eye = np.eye(a.shape[0])
    for rel in schedule:
        jitter = rel * scale
        try:
            lower = cholesky(a + jitter * eye, lower=True, check_finite=False)
        except LinAlgError:
            continue
        if rel > 0:
            logger.debug("Cholesky of %s needed jitter %.3g", name, jitter)
        return CholeskyFactor(lower=lower, jitter=jitter, name=name)
    raise NotPositiveDefiniteError(name, schedule)


def kron_logdet(k: KroneckerPSD) -> float:
    """``log|⊗K_d| = sum_d (m / m_d) log|K_d|``."""

    m = k.size
    return float(sum((m / dim) * ch.logdet() for dim, ch in zip(k.dims, k.cholesky)))


def kron_lower_logdet(lower: KroneckerLower) -> float:
    """``log|L L^T| = 2 sum_d (m / m_d) sum_p log L_d[p, p]``.

    Raises:
        ValueError: If any factor has a nonpositive diagonal entry.
    """

    m = lower.size
    total = 0.0
    for idx, factor in enumerate(lower.factors):
        diag = np.diag(factor)
        if np.any(diag <= 0):
            raise ValueError(f"lower factor {idx} has a nonpositive diagonal entry")
        total += 2.0 * (m / factor.shape[0]) * float(np.sum(np.log(diag)))
    return total


def factor_traces(k: KroneckerPSD, s_factors: Sequence[np.ndarray]) -> List[float]:
    """Per-factor traces ``tr(K_d^{-1} S_d)``."""

    if len(s_factors) != len(k.factors):
        raise ValueError(
            f"expected {len(k.factors)} covariance factors, got {len(s_factors)}"
        )
    traces: List[float] = []
    for idx, (ch, s) in enumerate(zip(k.cholesky, s_factors)):
        if s.shape != ch.lower.shape:
            raise ValueError(
                f"factor {idx}: shape {s.shape} does not match kernel factor {ch.lower.shape}"
            )
        traces.append(float(np.trace(ch.solve(s))))
    return traces


def kron_inv_trace(k: KroneckerPSD, s_factors: Sequence[np.ndarray]) -> float:
    """``tr(K^{-1} S) = prod_d tr(K_d^{-1} S_d)``."""

    return float(np.prod(factor_traces(k, s_factors)))


def kron_solve(k: KroneckerPSD, v: np.ndarray) -> np.ndarray:
    """Return ``(⊗K_d)^{-1} v`` through per-factor Cholesky solves."""

    ops = [ch.solve for ch in k.cholesky]
    return kron_apply(ops, k.dims, v)


def kron_solve_quadform(k: KroneckerPSD, v: np.ndarray) -> float:
    """``v^T (⊗K_d)^{-1} v``."""

    v = np.asarray(v, dtype=float)
    return float(v @ kron_solve(k, v))
