"""Bench mode: structured vs dense sampling and KL runtime across grid sizes."""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from pathlib import Path
from statistics import median
import time
from typing import Callable, List, Sequence

import numpy as np
from scipy.linalg import cho_solve

from src.errors import ConfigError, NumericalError
from src.gp.variational import GpUnit, VariationalState, kl_value, sample_u
from src.kernels.grid import Grid1D, InducingGrid
from src.kernels.rbf import RbfParams
from src.linalg.kron import factor_chol
from src.logging_config import get_logger
from src.ui.report import BenchRow, write_bench_csv

DEFAULT_SIZES = (256, 1024, 4096, 16384)
DEFAULT_DIMS = (2, 3)
MIN_REPEATS = 5
METHODS = ("kron_sample", "dense_sample", "kron_kl", "dense_kl")


@dataclass(frozen=True)
class BenchCase:
    """One benchmarked GP: per-dimension grid size and its realized total."""

    m_requested: int
    ndim: int
    gp: GpUnit

    @property
    def m(self) -> int:
        return self.gp.grid.size


def time_call(fn: Callable[[], object], repeats: int) -> float:
    """Median wall time of ``repeats`` calls after one warm-up call."""

    fn()
    samples = []
    for _ in range(max(repeats, MIN_REPEATS)):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    return float(median(samples))


def build_case(m: int, ndim: int, rng: np.random.Generator) -> BenchCase:
    """GP on a unit hypercube grid of about ``m`` points with a perturbed posterior."""

    per_dim = max(4, int(round(m ** (1.0 / ndim))))
    grid = InducingGrid(tuple(Grid1D(0.0, 1.0, per_dim) for _ in range(ndim)))
    kernel = RbfParams(np.full(ndim, np.log(0.2)), 0.0)
    prior = VariationalState.at_prior(grid, kernel)
    lowers = [0.9 * f for f in prior.l_factors.factors]
    vstate = VariationalState.from_lower(0.1 * rng.standard_normal(grid.size), lowers)
    return BenchCase(m, ndim, GpUnit(grid, kernel, vstate, tuple(range(ndim))))


def _dense_lower(gp: GpUnit) -> np.ndarray:
    return reduce(np.kron, gp.vstate.l_factors.factors)


def _dense_kl(gp: GpUnit, lower: np.ndarray) -> float:
    jittered = [
        f + ch.jitter * np.eye(f.shape[0]) for f, ch in zip(gp.prior.factors, gp.prior.cholesky)
    ]
    # the product of near-singular factors can need more jitter than each factor did
    chol = factor_chol(reduce(np.kron, jittered), name="dense K").lower
    mu = gp.vstate.mu
    s = lower @ lower.T
    m = mu.shape[0]
    logdet_k = 2.0 * np.sum(np.log(np.diag(chol)))
    logdet_s = 2.0 * np.sum(np.log(np.diag(lower)))
    trace = np.trace(cho_solve((chol, True), s))
    quad = float(mu @ cho_solve((chol, True), mu))
    return 0.5 * (logdet_k - logdet_s - m + trace + quad)


def run_benchmark(
    sizes: Sequence[int] = DEFAULT_SIZES,
    dims: Sequence[int] = DEFAULT_DIMS,
    repeats: int = MIN_REPEATS,
    dense_max: int = 4096,
    seed: int = 0,
) -> List[BenchRow]:
    """Time every method for every ``(m, D)``; dense methods stop at ``dense_max``.

    The structured and dense samplers are cross-checked on identical noise.

    Raises:
        ConfigError: On empty or invalid size and dimension lists.
        NumericalError: If the two samplers disagree.
    """

    logger = get_logger(__name__)
    if not sizes or any(m < 4 for m in sizes):
        raise ConfigError("benchmark sizes must be integers >= 4")
    if not dims or any(d not in (1, 2, 3) for d in dims):
        raise ConfigError("benchmark dimensions must be 1, 2 or 3")
    rng = np.random.default_rng(seed)
    rows: List[BenchRow] = []
    for ndim in dims:
        for m in sizes:
            case = build_case(m, ndim, rng)
            gp = case.gp
            eps = rng.standard_normal(case.m)
            seconds = time_call(lambda: sample_u(gp.vstate, eps), repeats)
            rows.append((case.m, ndim, "kron_sample", seconds))
            rows.append((case.m, ndim, "kron_kl", time_call(lambda: kl_value(gp), repeats)))
            if case.m > dense_max:
                logger.info("Skipping dense methods at m=%s D=%s", case.m, ndim)
                continue
            lower = _dense_lower(gp)
            mu = gp.vstate.mu
            dense_u = mu + lower @ eps
            if not np.allclose(dense_u, sample_u(gp.vstate, eps), rtol=1e-10, atol=1e-10):
                raise NumericalError(f"structured and dense samples differ at m={case.m} D={ndim}")
            seconds = time_call(lambda: mu + lower @ eps, repeats)
            rows.append((case.m, ndim, "dense_sample", seconds))
            seconds = time_call(lambda: _dense_kl(gp, lower), repeats)
            rows.append((case.m, ndim, "dense_kl", seconds))
            logger.info("Benchmarked m=%s D=%s", case.m, ndim)
    return rows


def fit_loglog_slope(rows: Sequence[BenchRow], method: str, ndim: int) -> float:
    """Least-squares slope of ``log seconds`` against ``log m``.

    Raises:
        ValueError: If fewer than two sizes were timed for ``(method, ndim)``.
    """

    picked = [(m, s) for m, d, name, s in rows if name == method and d == ndim]
    if len(picked) < 2:
        raise ValueError(f"need at least two timings of {method} at D={ndim}")
    m_values, seconds = zip(*picked)
    slope, _ = np.polyfit(np.log(m_values), np.log(np.maximum(seconds, 1e-12)), 1)
    return float(slope)


def run_bench(
    out_path: Path,
    sizes: Sequence[int],
    dims: Sequence[int],
    repeats: int,
    dense_max: int,
    seed: int,
) -> List[BenchRow]:
    logger = get_logger(__name__)
    rows = run_benchmark(sizes, dims, repeats, dense_max, seed)
    write_bench_csv(out_path, rows)
    for ndim in dims:
        for method in METHODS:
            try:
                slope = fit_loglog_slope(rows, method, ndim)
            except ValueError:
                continue
            logger.info("D=%s %s log-log slope=%.3f", ndim, method, slope)
    logger.info("Wrote %s benchmark rows to %s", len(rows), out_path)
    return rows
