"""Tests for matrix dumps, benchmark tables and metric summaries."""

import csv

import numpy as np
import pytest

from src.ui.report import (
    BENCH_HEADER,
    block_contrast,
    format_metrics,
    read_bench_csv,
    write_bench_csv,
    write_matrix_csv,
    write_pgm,
)


def test_matrix_csv_keeps_full_precision(tmp_path) -> None:
    matrix = np.array([[1.0 / 3.0, -2.5e-17], [4.0, 0.1]])
    path = tmp_path / "out" / "m.csv"
    write_matrix_csv(path, matrix)
    with path.open(newline="") as handle:
        rows = [[float(v) for v in row] for row in csv.reader(handle)]
    np.testing.assert_array_equal(np.array(rows), matrix)


def test_pgm_layout_and_scaling(tmp_path) -> None:
    path = tmp_path / "m.pgm"
    write_pgm(path, np.array([[0.0, 1.0, 2.0], [2.0, 1.0, 0.0]]))
    blob = path.read_bytes()
    header = b"P5\n3 2\n255\n"
    assert blob.startswith(header)
    assert list(blob[len(header) :]) == [0, 128, 255, 255, 128, 0]


def test_constant_matrix_renders_mid_gray(tmp_path) -> None:
    path = tmp_path / "flat.pgm"
    write_pgm(path, np.full((2, 2), 4.2))
    assert set(path.read_bytes()[-4:]) == {127}


def test_block_contrast_separates_classes() -> None:
    labels = np.array([0, 0, 1, 1])
    cov = np.array(
        [
            [9.0, 2.0, 0.5, 0.5],
            [2.0, 9.0, 0.5, 0.5],
            [0.5, 0.5, 9.0, 4.0],
            [0.5, 0.5, 4.0, 9.0],
        ]
    )
    within, between = block_contrast(cov, labels)
    assert within == pytest.approx(3.0)
    assert between == pytest.approx(0.5)
    with pytest.raises(ValueError):
        block_contrast(cov, np.zeros(4))
    with pytest.raises(ValueError):
        block_contrast(cov, labels[:3])


def test_bench_csv_round_trip(tmp_path) -> None:
    rows = [(256, 2, "kron_sample", 1.5e-5), (1024, 3, "dense_kl", 0.25)]
    path = tmp_path / "bench.csv"
    write_bench_csv(path, rows)
    assert path.read_text().splitlines()[0] == ",".join(BENCH_HEADER)
    back = read_bench_csv(path)
    assert [r[:3] for r in back] == [r[:3] for r in rows]
    assert back[0][3] == pytest.approx(1.5e-5)


def test_format_metrics() -> None:
    line = format_metrics("test", {"accuracy": 0.95, "nlp": 0.123456})
    assert line == "test: accuracy=0.9500 nlp=0.1235"
