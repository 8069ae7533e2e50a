"""Labeled datasets: CSV and libsvm ingestion, normalization and splits."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import DataError
from src.logging_config import get_logger

MIN_STD = 1e-12

LabelColumn = Union[str, int]


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with dense integer labels in ``[0, n_classes)``.

    ``label_names[c]`` is the raw label mapped to class ``c``. ``mean`` and
    ``std`` are set once the features have been z-scored.
    """

    x: np.ndarray
    y: np.ndarray
    label_names: Tuple[str, ...]
    feature_names: Tuple[str, ...] = ()
    mean: Optional[np.ndarray] = None
    std: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=np.int64)
        if x.ndim != 2:
            raise DataError(f"features must be a 2-D array, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise DataError(f"{y.shape[0] if y.ndim else 0} labels for {x.shape[0]} rows")
        if not np.all(np.isfinite(x)):
            raise DataError("features contain non-finite values")
        if y.size and (y.min() < 0 or y.max() >= len(self.label_names)):
            raise DataError(f"labels must lie in [0, {len(self.label_names)})")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "label_names", tuple(str(v) for v in self.label_names))

    @property
    def n(self) -> int:
        return int(self.x.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.x.shape[1])

    @property
    def n_classes(self) -> int:
        return len(self.label_names)

    @property
    def normalized(self) -> bool:
        return self.mean is not None

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return replace(self, x=self.x[idx], y=self.y[idx])

    def sorted_by_label(self) -> "Dataset":
        return self.subset(np.argsort(self.y, kind="stable"))


def _label_sort_key(value: str) -> Tuple[int, float, str]:
    try:
        return (0, float(value), value)
    except ValueError:
        return (1, 0.0, value)


def _map_labels(
    raw: Sequence[str], label_names: Optional[Sequence[str]], source: str
) -> Tuple[np.ndarray, Tuple[str, ...]]:
    if label_names is None:
        label_names = tuple(sorted(set(raw), key=_label_sort_key))
    lookup: Dict[str, int] = {name: idx for idx, name in enumerate(label_names)}
    y = np.empty(len(raw), dtype=np.int64)
    for pos, value in enumerate(raw):
        if value not in lookup:
            raise DataError(f"{source}: label {value!r} was not seen during training")
        y[pos] = lookup[value]
    return y, tuple(label_names)


def _normalize_label(value: str) -> str:
    """Canonical text for numeric labels, so ``1`` and ``1.0`` agree."""

    value = value.strip()
    try:
        number = float(value)
    except ValueError:
        return value
    return str(int(number)) if number.is_integer() else repr(number)


def load_csv(
    path: Path,
    label_column: LabelColumn = "y",
    header: bool = True,
    normalize: bool = True,
    label_names: Optional[Sequence[str]] = None,
) -> Dataset:
    """Parse a CSV file with one label column and numeric feature columns.

    ``label_column`` is a column name (with a header) or a zero-based index.
    Passing ``label_names`` maps labels onto an existing class order.

    Raises:
        DataError: On unreadable, empty or ragged files, non-numeric features,
            a missing label column, or labels absent from ``label_names``.
    """

    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as handle:
            rows = [row for row in csv.reader(handle) if row and any(c.strip() for c in row)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: file is empty")

    width = len(rows[0])
    names = [c.strip() for c in rows[0]] if header else [f"x{i}" for i in range(width)]
    body = rows[1:] if header else rows
    if not body:
        raise DataError(f"{path}: no data rows")
    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if label_column not in names:
            raise DataError(f"{path}: no label column named {label_column!r}")
        label_idx = names.index(label_column)
    else:
        label_idx = int(label_column)
        if not -width <= label_idx < width:
            raise DataError(f"{path}: label column {label_idx} outside {width} columns")
        label_idx %= width

    feature_idx = [i for i in range(width) if i != label_idx]
    x = np.empty((len(body), len(feature_idx)))
    raw_labels: List[str] = []
    first_line = 2 if header else 1
    for pos, row in enumerate(body):
        line = first_line + pos
        if len(row) != width:
            raise DataError(f"{path}:{line}: expected {width} fields, got {len(row)}")
        for col, src in enumerate(feature_idx):
            try:
                x[pos, col] = float(row[src])
            except ValueError as exc:
                raise DataError(
                    f"{path}:{line}: non-numeric value {row[src]!r} in column {names[src]!r}"
                ) from exc
        raw_labels.append(_normalize_label(row[label_idx]))

    y, labels = _map_labels(raw_labels, label_names, str(path))
    dataset = Dataset(x, y, labels, tuple(names[i] for i in feature_idx))
    get_logger(__name__).info(
        "Loaded %s rows, %s features, %s classes from %s",
        dataset.n,
        dataset.n_features,
        dataset.n_classes,
        path,
    )
    return normalize_dataset(dataset) if normalize else dataset


def load_libsvm(
    path: Path,
    d: int,
    normalize: bool = True,
    label_names: Optional[Sequence[str]] = None,
) -> Dataset:
    """Parse ``label index:value ...`` lines with 1-based indices into dense rows.

    Raises:
        DataError: On malformed pairs, indices outside ``[1, d]`` or an empty file.
    """

    path = Path(path)
    if d < 1:
        raise DataError(f"libsvm dimension must be positive, got {d}")
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    rows: List[np.ndarray] = []
    raw_labels: List[str] = []
    for line_no, line in enumerate(lines, start=1):
        tokens = line.split("#", 1)[0].split()
        if not tokens:
            continue
        row = np.zeros(d)
        for token in tokens[1:]:
            index_text, sep, value_text = token.partition(":")
            try:
                index = int(index_text)
                value = float(value_text)
            except ValueError as exc:
                raise DataError(f"{path}:{line_no}: malformed pair {token!r}") from exc
            if not sep or index < 1 or index > d:
                raise DataError(f"{path}:{line_no}: feature index {index} outside [1, {d}]")
            row[index - 1] = value
        rows.append(row)
        raw_labels.append(_normalize_label(tokens[0]))
    if not rows:
        raise DataError(f"{path}: file is empty")

    y, labels = _map_labels(raw_labels, label_names, str(path))
    dataset = Dataset(np.vstack(rows), y, labels, tuple(f"x{i + 1}" for i in range(d)))
    return normalize_dataset(dataset) if normalize else dataset


def normalize_dataset(
    dataset: Dataset, stats: Optional[Tuple[np.ndarray, np.ndarray]] = None
) -> Dataset:
    """Z-score the features with ``stats`` or with the dataset's own mean and std.

    Standard deviations below 1e-12 are replaced by 1.
    """

    if dataset.normalized:
        raise DataError("dataset is already normalized")
    if stats is None:
        mean = dataset.x.mean(axis=0)
        std = dataset.x.std(axis=0)
        std = np.where(std < MIN_STD, 1.0, std)
    else:
        mean, std = (np.asarray(s, dtype=float) for s in stats)
        if mean.shape != (dataset.n_features,) or std.shape != (dataset.n_features,):
            raise DataError(
                f"normalization stats cover {mean.shape[0]} features, data has {dataset.n_features}"
            )
    return replace(dataset, x=(dataset.x - mean) / std, mean=mean, std=std)


def denormalize(x: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=float) * std + mean


def split(
    dataset: Dataset, fractions: Sequence[float], seed: int
) -> Tuple[Dataset, Dataset, Dataset]:
    """Seeded shuffle, then partition into train, validation and test.

    Raises:
        ValueError: If a fraction is negative or they do not sum to 1.
    """

    if len(fractions) != 3:
        raise ValueError(f"expected three fractions, got {len(fractions)}")
    if any(f < 0 for f in fractions):
        raise ValueError(f"fractions must be nonnegative, got {tuple(fractions)}")
    if not np.isclose(sum(fractions), 1.0):
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    order = np.random.default_rng(seed).permutation(dataset.n)
    n_train = int(round(fractions[0] * dataset.n))
    n_val = min(int(round(fractions[1] * dataset.n)), dataset.n - n_train)
    return (
        dataset.subset(order[:n_train]),
        dataset.subset(order[n_train : n_train + n_val]),
        dataset.subset(order[n_train + n_val :]),
    )


def kfold(dataset: Dataset, k: int, seed: int) -> Iterator[Tuple[Dataset, Dataset]]:
    """Yield ``(train, test)`` pairs; every point is tested exactly once.

    Raises:
        ValueError: If ``k`` is not in ``[2, n]``.
    """

    if not 2 <= k <= dataset.n:
        raise ValueError(f"k must lie in [2, {dataset.n}], got {k}")
    order = np.random.default_rng(seed).permutation(dataset.n)
    folds = np.array_split(order, k)
    for idx, test_idx in enumerate(folds):
        train_idx = np.concatenate([f for j, f in enumerate(folds) if j != idx])
        yield dataset.subset(train_idx), dataset.subset(test_idx)
