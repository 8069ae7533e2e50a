"""Reporting utilities: matrix CSV/PGM dumps, benchmark tables and metric summaries."""

from __future__ import annotations

import csv
import os
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Tuple

import numpy as np

from src.logging_config import get_logger

BENCH_HEADER = ("m", "D", "method", "seconds")
PGM_MAX = 255

BenchRow = Tuple[int, int, str, float]


def _ensure_parent(path: Path) -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        os.makedirs(path.parent, exist_ok=True)
    return path


def write_matrix_csv(path: Path, matrix: np.ndarray) -> None:
    """Write a 2-D array as comma-separated rows at full precision."""

    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    path = _ensure_parent(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        for row in matrix:
            writer.writerow([repr(float(v)) for v in row])


def write_pgm(path: Path, matrix: np.ndarray) -> None:
    """Render a matrix as a binary grayscale PGM, min mapped to black, max to white."""

    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    lo = float(matrix.min())
    span = float(matrix.max()) - lo
    if span <= 0.0:
        pixels = np.full(matrix.shape, PGM_MAX // 2, dtype=np.uint8)
    else:
        pixels = np.round((matrix - lo) / span * PGM_MAX).astype(np.uint8)
    path = _ensure_parent(path)
    rows, cols = pixels.shape
    with path.open("wb") as handle:
        handle.write(f"P5\n{cols} {rows}\n{PGM_MAX}\n".encode("ascii"))
        handle.write(pixels.tobytes())


def block_contrast(cov: np.ndarray, labels: np.ndarray) -> Tuple[float, float]:
    """Mean covariance between points of the same class and of different classes.

    The diagonal is excluded from the within-class mean.

    Raises:
        ValueError: If shapes disagree or a side has no pairs.
    """

    cov = np.asarray(cov, dtype=float)
    labels = np.asarray(labels)
    if cov.shape != (labels.shape[0], labels.shape[0]):
        raise ValueError(f"covariance shape {cov.shape} does not match {labels.shape[0]} labels")
    same = labels[:, None] == labels[None, :]
    off_diag = ~np.eye(labels.shape[0], dtype=bool)
    within = same & off_diag
    between = ~same
    if not within.any() or not between.any():
        raise ValueError("block contrast needs at least two classes with two points each")
    return float(cov[within].mean()), float(cov[between].mean())


def write_bench_csv(path: Path, rows: Iterable[BenchRow]) -> None:
    path = _ensure_parent(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(BENCH_HEADER)
        for m, d, method, seconds in rows:
            writer.writerow([m, d, method, f"{seconds:.9f}"])


def read_bench_csv(path: Path) -> List[BenchRow]:
    with Path(path).open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        return [
            (int(r["m"]), int(r["D"]), r["method"], float(r["seconds"])) for r in reader
        ]


def format_metrics(name: str, metrics: Mapping[str, float]) -> str:
    """One-line summary such as ``validation: accuracy=0.9500 nlp=0.1234``."""

    parts = " ".join(f"{key}={value:.4f}" for key, value in metrics.items())
    return f"{name}: {parts}"


def log_metric_table(rows: Dict[str, Mapping[str, float]]) -> None:
    logger = get_logger(__name__)
    for name, metrics in rows.items():
        logger.info("%s", format_metrics(name, metrics))
