"""Regular inducing grids."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from src.logging_config import get_logger

MIN_POINTS_PER_DIM = 4
DEGENERATE_RANGE = 1e-12


@dataclass(frozen=True)
class Grid1D:
    """Equispaced grid of ``size`` points on ``[lo, hi]``."""

    lo: float
    hi: float
    size: int

    def __post_init__(self) -> None:
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ValueError("grid bounds must be finite")
        if self.lo >= self.hi:
            raise ValueError(f"grid requires lo < hi, got [{self.lo}, {self.hi}]")
        if self.size < MIN_POINTS_PER_DIM:
            raise ValueError(
                f"grid needs at least {MIN_POINTS_PER_DIM} points per dimension, got {self.size}"
            )

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.size)

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.size - 1)

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.hi - self.lo)


@dataclass(frozen=True)
class InducingGrid:
    """Cartesian product of per-dimension grids (row-major, first dim slowest)."""

    dims: Tuple[Grid1D, ...]

    def __post_init__(self) -> None:
        if not 1 <= len(self.dims) <= 3:
            raise ValueError(f"grids of dimension 1 to 3 are supported, got {len(self.dims)}")

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(g.size for g in self.dims)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def strides(self) -> Tuple[int, ...]:
        """Flat-index stride of each dimension."""

        strides: List[int] = []
        acc = 1
        for size in reversed(self.shape):
            strides.append(acc)
            acc *= size
        return tuple(reversed(strides))


def build_grid(
    feature_lo: Sequence[float],
    feature_hi: Sequence[float],
    m_per_dim: Sequence[int],
    margin: float = 0.1,
) -> InducingGrid:
    """Build a grid spanning ``[lo - margin*range, hi + margin*range]`` per dimension.

    A degenerate dimension (``hi - lo < 1e-12``) is widened to a unit range
    around its midpoint instead, and a warning is logged.

    Raises:
        ValueError: If the argument lengths disagree, ``lo > hi`` or a size is below 4.
    """

    logger = get_logger(__name__)
    lo = np.asarray(feature_lo, dtype=float).ravel()
    hi = np.asarray(feature_hi, dtype=float).ravel()
    if not (len(lo) == len(hi) == len(m_per_dim)):
        raise ValueError("feature_lo, feature_hi and m_per_dim must have the same length")
    if margin < 0:
        raise ValueError("margin must be nonnegative")

    dims: List[Grid1D] = []
    for d, (a, b, size) in enumerate(zip(lo, hi, m_per_dim)):
        if a > b:
            raise ValueError(f"dimension {d}: lo {a} exceeds hi {b}")
        if b - a < DEGENERATE_RANGE:
            mid = 0.5 * (a + b)
            logger.warning(
                "Degenerate feature range in dimension %s at %.6g; using [%.6g, %.6g]",
                d,
                mid,
                mid - 0.5,
                mid + 0.5,
            )
            dims.append(Grid1D(mid - 0.5, mid + 0.5, int(size)))
            continue
        span = b - a
        dims.append(Grid1D(a - margin * span, b + margin * span, int(size)))
    return InducingGrid(tuple(dims))
