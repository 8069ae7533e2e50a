"""Bounded feature map keeping GP inputs strictly inside their grids."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.kernels.grid import InducingGrid

# fraction of each grid's half-width that squashed inputs may occupy
GRID_FILL = 0.9


@dataclass(frozen=True)
class Squash:
    """Per-feature ``s = tanh(scale * (h - center))`` with frozen center and scale."""

    center: np.ndarray
    scale: np.ndarray

    @classmethod
    def from_features(cls, features: np.ndarray) -> "Squash":
        """Map the empirical feature range onto ``[-tanh(1), tanh(1)]``."""

        features = np.asarray(features, dtype=float)
        lo = features.min(axis=0)
        hi = features.max(axis=0)
        half = 0.5 * (hi - lo)
        scale = np.where(half > 1e-12, 1.0 / np.where(half > 1e-12, half, 1.0), 1.0)
        return cls(0.5 * (lo + hi), scale)

    def apply(self, h: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Squashed features and their elementwise derivative w.r.t. ``h``."""

        s = np.tanh(self.scale * (np.asarray(h, dtype=float) - self.center))
        return s, self.scale * (1.0 - s * s)


def grid_affine(grid: InducingGrid) -> Tuple[np.ndarray, np.ndarray]:
    """Offset and slope mapping ``[-1, 1]`` onto the central part of ``grid``."""

    mid = np.array([g.midpoint for g in grid.dims])
    slope = GRID_FILL * np.array([g.half_width for g in grid.dims])
    return mid, slope


def to_grid(grid: InducingGrid, squashed: np.ndarray) -> np.ndarray:
    mid, slope = grid_affine(grid)
    return mid + slope * squashed
