"""Tests for the sampling and KL benchmark."""

import numpy as np
import pytest

from src.errors import ConfigError
from src.gp.variational import kl_value
from src.modes.bench import (
    METHODS,
    _dense_kl,
    _dense_lower,
    build_case,
    fit_loglog_slope,
    run_bench,
    run_benchmark,
    time_call,
)
from src.ui.report import read_bench_csv


def test_case_rounds_to_a_square_grid() -> None:
    case = build_case(100, 2, np.random.default_rng(0))
    assert case.gp.grid.shape == (10, 10)
    assert case.m == 100


def test_dense_and_structured_kl_agree() -> None:
    case = build_case(27, 3, np.random.default_rng(1))
    lower = _dense_lower(case.gp)
    assert _dense_kl(case.gp, lower) == pytest.approx(kl_value(case.gp), rel=1e-8)


def test_benchmark_rows_and_dense_cutoff() -> None:
    rows = run_benchmark(sizes=[16, 64], dims=[2], repeats=5, dense_max=16, seed=2)
    methods = {(m, name) for m, _, name, _ in rows}
    assert {(16, name) for name in METHODS} <= methods
    assert (64, "kron_sample") in methods
    assert (64, "dense_sample") not in methods
    assert all(seconds >= 0.0 for _, _, _, seconds in rows)


def test_benchmark_validates_arguments() -> None:
    with pytest.raises(ConfigError):
        run_benchmark(sizes=[], dims=[2])
    with pytest.raises(ConfigError):
        run_benchmark(sizes=[16], dims=[4])


def test_loglog_slope_of_synthetic_timings() -> None:
    rows = [(m, 2, "kron_kl", 1e-9 * m**1.5) for m in (64, 256, 1024)]
    assert fit_loglog_slope(rows, "kron_kl", 2) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        fit_loglog_slope(rows[:1], "kron_kl", 2)


def test_time_call_runs_at_least_five_times() -> None:
    calls = []
    time_call(lambda: calls.append(1), repeats=2)
    assert len(calls) == 6


def test_run_bench_writes_csv(tmp_path) -> None:
    path = tmp_path / "bench.csv"
    rows = run_bench(path, [16, 36], [2], 5, 4096, 0)
    back = read_bench_csv(path)
    assert [r[:3] for r in back] == [r[:3] for r in rows]
    assert {m for m, _, _, _ in back} == {16, 36}


def test_dense_methods_run_on_ill_conditioned_default_sizes() -> None:
    rows = run_benchmark(sizes=[256], dims=[2], repeats=5, dense_max=4096, seed=3)
    assert {name for _, _, name, _ in rows} == set(METHODS)
    case = build_case(256, 2, np.random.default_rng(4))
    assert np.isfinite(_dense_kl(case.gp, _dense_lower(case.gp)))
