"""Exception hierarchy for the SV-DKL package."""

from __future__ import annotations

from typing import Any, Optional


class SvdklError(Exception):
    """Base class for all package errors."""


class ConfigError(SvdklError, ValueError):
    """Invalid configuration value or flag."""


class DataError(SvdklError, ValueError):
    """Unreadable, malformed or mismatched input data."""


class CheckpointError(DataError):
    """Checkpoint could not be read back."""


class OutOfGridError(SvdklError, ValueError):
    """An interpolation input fell outside the inducing grid."""

    def __init__(self, dim: int, value: float, lo: float, hi: float) -> None:
        super().__init__(
            f"input {value:.6g} in dimension {dim} lies outside grid [{lo:.6g}, {hi:.6g}]"
        )
        self.dim = dim
        self.value = value


class NumericalError(SvdklError, ArithmeticError):
    """Numerical failure during linear algebra or training."""


class NotPositiveDefiniteError(NumericalError):
    """Cholesky failed for every jitter in the schedule."""

    def __init__(self, name: str, jitters: Any) -> None:
        super().__init__(
            f"factor '{name}' is not positive definite (tried jitters {list(jitters)})"
        )
        self.name = name


class NonFiniteElboError(NumericalError):
    """The ELBO or one of its gradient blocks is not finite."""

    def __init__(self, block: str) -> None:
        super().__init__(f"non-finite value in block '{block}'")
        self.block = block


class TrainingDivergedError(NumericalError):
    """Loss became non-finite; carries the last finite parameters."""

    def __init__(self, message: str, last_finite: Optional[Any] = None) -> None:
        super().__init__(message)
        self.last_finite = last_finite
