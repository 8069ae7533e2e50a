"""Logging configuration for SV-DKL."""

from __future__ import annotations

import logging
from typing import Optional, Union


def setup_logging(level: Union[int, str] = logging.INFO) -> None:
    """Configure root logging for the application."""

    if isinstance(level, str):
        level = logging.getLevelName(level.strip().upper())
        if not isinstance(level, int):
            level = logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s - %(message)s",
        force=True,
    )


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """Return a named logger."""

    return logging.getLogger(name)
