"""Covdump mode: induced covariance of chosen GPs over label-sorted inputs."""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Sequence, Tuple

import numpy as np

from src.config import CliConfig
from src.data.checkpoint import load_checkpoint
from src.errors import ConfigError
from src.logging_config import get_logger
from src.modes.evaluate import load_eval_data
from src.training.trainer import dump_covariance
from src.ui.report import block_contrast


def run_covdump(
    cli: CliConfig,
    checkpoint_path: Path,
    gp_indices: Sequence[int],
    out_dir: Path,
    cap: int,
    max_points: int = 0,
) -> Dict[int, Tuple[float, float]]:
    """Dump each requested GP; returns ``{j: (within, between)}`` class contrasts.

    ``max_points > 0`` keeps a seeded subsample of that many inputs.

    Raises:
        ConfigError: If an index is invalid or too many inputs are requested.
    """

    logger = get_logger(__name__)
    ckpt = load_checkpoint(checkpoint_path)
    n_gps = ckpt.model.n_gps
    bad = [j for j in gp_indices if not 0 <= j < n_gps]
    if bad:
        raise ConfigError(f"GP indices {bad} outside [0, {n_gps})")

    dataset = load_eval_data(cli, ckpt)
    if 0 < max_points < dataset.n:
        keep = np.random.default_rng(cli.train.seed).permutation(dataset.n)[:max_points]
        dataset = dataset.subset(np.sort(keep))
    dataset = dataset.sorted_by_label()

    contrasts: Dict[int, Tuple[float, float]] = {}
    for j in gp_indices:
        cov = dump_covariance(ckpt.model, dataset.x, j, Path(out_dir), cap)
        try:
            within, between = block_contrast(cov, dataset.y)
        except ValueError as exc:
            logger.warning("No class contrast for GP %s: %s", j, exc)
            continue
        contrasts[j] = (within, between)
        logger.info("GP %s within-class cov=%.5f between-class cov=%.5f", j, within, between)
    return contrasts
