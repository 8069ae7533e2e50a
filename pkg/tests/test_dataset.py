"""Tests for data loading, normalization and splitting."""

import numpy as np
import pytest

from src.data.dataset import (
    Dataset,
    denormalize,
    kfold,
    load_csv,
    load_libsvm,
    normalize_dataset,
    split,
)
from src.errors import DataError


def _write(tmp_path, name: str, text: str):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def _dataset(n: int = 10) -> Dataset:
    x = np.arange(2 * n, dtype=float).reshape(n, 2)
    return Dataset(x, np.arange(n) % 2, ("a", "b"))


def test_load_csv_with_header_and_named_label(tmp_path) -> None:
    path = _write(tmp_path, "d.csv", "f1,label,f2\n1.0,cat,2.0\n3.0,dog,4.0\n5.0,cat,6.0\n")
    ds = load_csv(path, "label", normalize=False)
    np.testing.assert_array_equal(ds.x, [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    np.testing.assert_array_equal(ds.y, [0, 1, 0])
    assert ds.label_names == ("cat", "dog")
    assert ds.feature_names == ("f1", "f2")


def test_load_csv_by_index_without_header(tmp_path) -> None:
    path = _write(tmp_path, "d.csv", "0.5,1.5,2\n0.1,0.2,10\n0.3,0.4,1.0\n")
    ds = load_csv(path, "2", header=False, normalize=False)
    assert ds.label_names == ("1", "2", "10")
    np.testing.assert_array_equal(ds.y, [1, 2, 0])


def test_load_csv_reports_bad_lines(tmp_path) -> None:
    ragged = _write(tmp_path, "ragged.csv", "a,y\n1,0\n2\n")
    with pytest.raises(DataError, match=":3:"):
        load_csv(ragged)
    words = _write(tmp_path, "words.csv", "a,y\n1,0\nabc,1\n")
    with pytest.raises(DataError, match="non-numeric"):
        load_csv(words)
    empty = _write(tmp_path, "empty.csv", "")
    with pytest.raises(DataError):
        load_csv(empty)
    with pytest.raises(DataError):
        load_csv(_write(tmp_path, "nolabel.csv", "a,b\n1,2\n"), "y")
    with pytest.raises(DataError):
        load_csv(tmp_path / "missing.csv")


def test_load_csv_maps_onto_known_labels(tmp_path) -> None:
    path = _write(tmp_path, "d.csv", "a,y\n1,dog\n2,cat\n")
    ds = load_csv(path, label_names=("dog", "cat", "eel"), normalize=False)
    np.testing.assert_array_equal(ds.y, [0, 1])
    assert ds.n_classes == 3
    with pytest.raises(DataError, match="not seen"):
        load_csv(path, label_names=("dog",), normalize=False)


def test_load_libsvm(tmp_path) -> None:
    path = _write(tmp_path, "d.svm", "+1 1:0.5 3:2.0\n-1 2:1.0\n\n+1 3:-1 # note\n")
    ds = load_libsvm(path, 3, normalize=False)
    np.testing.assert_array_equal(ds.x, [[0.5, 0.0, 2.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]])
    assert ds.label_names == ("-1", "1")
    np.testing.assert_array_equal(ds.y, [1, 0, 1])


def test_load_libsvm_rejects_bad_indices(tmp_path) -> None:
    path = _write(tmp_path, "d.svm", "1 1:0.5\n0 4:1.0\n")
    with pytest.raises(DataError, match=":2:"):
        load_libsvm(path, 3)
    with pytest.raises(DataError):
        load_libsvm(_write(tmp_path, "zero.svm", "1 0:1.0\n"), 3)
    with pytest.raises(DataError):
        load_libsvm(_write(tmp_path, "pair.svm", "1 1-2\n"), 3)


def test_normalization_round_trip() -> None:
    rng = np.random.default_rng(0)
    x = rng.normal(3.0, 2.0, size=(50, 3))
    x[:, 2] = 7.0
    ds = normalize_dataset(Dataset(x, np.zeros(50), ("only",)))
    np.testing.assert_allclose(ds.x[:, :2].mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(ds.x[:, :2].std(axis=0), 1.0)
    assert ds.std[2] == 1.0
    np.testing.assert_allclose(denormalize(ds.x, ds.mean, ds.std), x, atol=1e-12)
    with pytest.raises(DataError):
        normalize_dataset(ds)


def test_normalize_with_training_stats() -> None:
    train = normalize_dataset(_dataset())
    other = normalize_dataset(_dataset(4), (train.mean, train.std))
    np.testing.assert_allclose(other.mean, train.mean)
    with pytest.raises(DataError):
        normalize_dataset(_dataset(4), (np.zeros(3), np.ones(3)))


def test_dataset_validation() -> None:
    with pytest.raises(DataError):
        Dataset(np.ones(3), np.zeros(3), ("a",))
    with pytest.raises(DataError):
        Dataset(np.ones((3, 1)), np.zeros(2), ("a",))
    with pytest.raises(DataError):
        Dataset(np.ones((2, 1)), np.array([0, 2]), ("a", "b"))
    with pytest.raises(DataError):
        Dataset(np.array([[np.inf]]), np.zeros(1), ("a",))


def test_split_is_seeded_partition() -> None:
    ds = _dataset(20)
    train, val, test = split(ds, (0.6, 0.2, 0.2), seed=4)
    assert (train.n, val.n, test.n) == (12, 4, 4)
    rows = np.vstack([train.x, val.x, test.x])
    assert sorted(map(tuple, rows)) == sorted(map(tuple, ds.x))
    again = split(ds, (0.6, 0.2, 0.2), seed=4)
    np.testing.assert_array_equal(again[0].x, train.x)
    with pytest.raises(ValueError):
        split(ds, (0.5, 0.2, 0.2), seed=0)
    with pytest.raises(ValueError):
        split(ds, (1.2, -0.2, 0.0), seed=0)


def test_kfold_tests_every_point_once() -> None:
    ds = _dataset(10)
    seen = []
    for train, test in kfold(ds, 5, seed=1):
        assert train.n + test.n == 10
        seen.extend(test.x[:, 0].tolist())
    assert sorted(seen) == sorted(ds.x[:, 0].tolist())
    with pytest.raises(ValueError):
        list(kfold(ds, 1, seed=0))


def test_sorted_by_label_is_stable() -> None:
    ds = _dataset(6).sorted_by_label()
    np.testing.assert_array_equal(ds.y, [0, 0, 0, 1, 1, 1])
    np.testing.assert_array_equal(ds.x[:3, 0], [0.0, 4.0, 8.0])
