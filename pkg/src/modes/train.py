"""Train mode: load data, run the three-phase fit, write checkpoint and log."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np

from src.config import CliConfig
from src.data.checkpoint import ModelCheckpoint, save_checkpoint
from src.data.dataset import Dataset, load_csv, load_libsvm, normalize_dataset, split
from src.errors import DataError
from src.logging_config import get_logger
from src.training.trainer import Metrics, evaluate, fit
from src.ui.report import format_metrics, log_metric_table

CHECKPOINT_NAME = "model.ckpt"
LOG_NAME = "train_log.jsonl"


@dataclass(frozen=True)
class TrainSummary:
    """Paths written and metrics per split."""

    checkpoint_path: Path
    log_path: Path
    metrics: Dict[str, Metrics]
    baselines: Dict[str, Metrics]


def load_run_data(
    cli: CliConfig, label_names: Optional[Sequence[str]] = None
) -> Dataset:
    """Read the configured data file without normalizing it.

    Raises:
        DataError: If no path is configured or the file cannot be parsed.
    """

    if not cli.data:
        raise DataError("no data path given (use --data)")
    if cli.format == "libsvm":
        return load_libsvm(
            Path(cli.data), int(cli.libsvm_dim or 0), normalize=False, label_names=label_names
        )
    return load_csv(
        Path(cli.data), cli.label_col, cli.header, normalize=False, label_names=label_names
    )


def run_train(cli: CliConfig, out_dir: Path) -> TrainSummary:
    """Fit a model on the configured data and persist it under ``out_dir``."""

    logger = get_logger(__name__)
    raw = load_run_data(cli)
    train_raw, val_raw, test_raw = split(raw, cli.fractions, cli.train.seed)
    if train_raw.n == 0:
        raise DataError("the training split is empty")

    stats = None
    if cli.normalize:
        train = normalize_dataset(train_raw)
        stats = (train.mean, train.std)
        val = normalize_dataset(val_raw, stats)
        test = normalize_dataset(test_raw, stats)
    else:
        train, val, test = train_raw, val_raw, test_raw
    logger.info(
        "Split %s rows into train=%s validation=%s test=%s", raw.n, train.n, val.n, test.n
    )

    result = fit(train, cli.train, validation=val if val.n else None)
    rng = np.random.default_rng(cli.train.seed)
    metrics = {"train": evaluate(result.model, train, cli.train.predict_samples, rng)}
    for name, part in (("validation", val), ("test", test)):
        if part.n:
            metrics[name] = evaluate(result.model, part, cli.train.predict_samples, rng)

    out_dir = Path(out_dir)
    checkpoint_path = out_dir / CHECKPOINT_NAME
    log_path = out_dir / LOG_NAME
    save_checkpoint(
        ModelCheckpoint(
            model=result.model,
            config=cli.train,
            label_names=raw.label_names,
            feature_names=raw.feature_names,
            mean=None if stats is None else stats[0],
            std=None if stats is None else stats[1],
            rng_state=rng.bit_generator.state,
        ),
        checkpoint_path,
    )
    result.log.write_jsonl(log_path)
    logger.info("Wrote %s and %s", checkpoint_path, log_path)

    for name, value in metrics.items():
        print(format_metrics(name, {"accuracy": value.accuracy, "nlp": value.nlp}))
    log_metric_table(
        {
            f"baseline {name}": {"accuracy": value.accuracy, "nlp": value.nlp}
            for name, value in result.baselines.items()
        }
    )
    return TrainSummary(checkpoint_path, log_path, metrics, result.baselines)
