"""Eval mode: metrics of a saved model on a dataset."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from src.config import CliConfig
from src.data.checkpoint import ModelCheckpoint, load_checkpoint
from src.data.dataset import Dataset, normalize_dataset
from src.errors import ConfigError, DataError
from src.modes.train import load_run_data
from src.training.trainer import Metrics, evaluate
from src.ui.report import format_metrics


def load_eval_data(cli: CliConfig, ckpt: ModelCheckpoint) -> Dataset:
    """Read data with the checkpoint's label order and normalization.

    Raises:
        DataError: If the feature dimension differs from the trained network.
    """

    dataset = load_run_data(cli, label_names=ckpt.label_names)
    expected = ckpt.model.spec.n_inputs
    if dataset.n_features != expected:
        raise DataError(f"data has {dataset.n_features} features, model expects {expected}")
    if ckpt.normalization is not None:
        dataset = normalize_dataset(dataset, ckpt.normalization)
    return dataset


def run_eval(cli: CliConfig, checkpoint_path: Path, samples: int) -> Metrics:
    """Print and return accuracy and NLP; ``samples == 0`` uses the variational mean."""

    if samples < 0:
        raise ConfigError(f"--samples must be nonnegative, got {samples}")
    ckpt = load_checkpoint(checkpoint_path)
    dataset = load_eval_data(cli, ckpt)
    metrics = evaluate(ckpt.model, dataset, samples, np.random.default_rng(cli.train.seed))
    print(format_metrics("eval", {"accuracy": metrics.accuracy, "nlp": metrics.nlp}))
    return metrics
