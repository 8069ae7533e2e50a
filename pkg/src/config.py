"""Configuration loading: environment defaults plus per-run TOML/flag options."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
import os
from pathlib import Path
import sys
from typing import Any, Dict, Mapping, Optional, Tuple

from dotenv import find_dotenv, load_dotenv

from src.errors import ConfigError
from src.training.trainer import TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def _load_env_files() -> None:
    """Load environment variables from .env or svdkl.env if present."""

    load_dotenv(find_dotenv(usecwd=True), override=False)
    project_root = Path(__file__).resolve().parents[1]
    local_env = project_root / "svdkl.env"
    if local_env.exists():
        load_dotenv(local_env, override=False)


_load_env_files()


@dataclass(frozen=True)
class Config:
    """Runtime configuration loaded from environment variables."""

    log_level: str
    threads: int
    output_dir: str
    covdump_cap: int
    dense_bench_max: int

    @staticmethod
    def _get_env_int(name: str, default: int, minimum: int = 1) -> int:
        value = os.getenv(name)
        if value is None or not value.strip():
            return default
        try:
            parsed = int(value.strip())
        except ValueError as exc:
            raise ConfigError(f"{name} must be an integer, got {value!r}") from exc
        if parsed < minimum:
            raise ConfigError(f"{name} must be >= {minimum}, got {parsed}")
        return parsed

    @classmethod
    def from_env(cls) -> "Config":
        """Load configuration from environment variables.

        Raises:
            ConfigError: If a variable holds an invalid value.
        """

        log_level = os.getenv("SVDKL_LOG_LEVEL", "INFO").strip().upper()
        if log_level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ConfigError(f"SVDKL_LOG_LEVEL must be a logging level name, got {log_level!r}")

        return cls(
            log_level=log_level,
            threads=cls._get_env_int("SVDKL_THREADS", 1),
            output_dir=os.getenv("SVDKL_OUTPUT_DIR", "./runs"),
            covdump_cap=cls._get_env_int("SVDKL_COVDUMP_CAP", 3000),
            dense_bench_max=cls._get_env_int("SVDKL_DENSE_BENCH_MAX", 4096),
        )


@dataclass(frozen=True)
class CliConfig:
    """Training options plus data and output paths for one command invocation."""

    train: TrainConfig
    data: Optional[str] = None
    label_col: str = "y"
    header: bool = True
    format: str = "csv"
    libsvm_dim: Optional[int] = None
    normalize: bool = True
    val_fraction: float = 0.1
    test_fraction: float = 0.1
    out: Optional[str] = None

    def __post_init__(self) -> None:
        if self.format not in {"csv", "libsvm"}:
            raise ConfigError(f"format must be 'csv' or 'libsvm', got {self.format!r}")
        if self.format == "libsvm" and (self.libsvm_dim is None or self.libsvm_dim < 1):
            raise ConfigError("libsvm data needs a positive libsvm_dim")
        for name in ("val_fraction", "test_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {value}")
        if self.val_fraction + self.test_fraction >= 1.0:
            raise ConfigError("val_fraction + test_fraction must leave room for training data")

    @property
    def fractions(self) -> Tuple[float, float, float]:
        train = 1.0 - self.val_fraction - self.test_fraction
        return (train, self.val_fraction, self.test_fraction)

    @classmethod
    def merge(
        cls,
        file_values: Mapping[str, Any],
        flag_values: Mapping[str, Any],
    ) -> "CliConfig":
        """Combine defaults < config file < flags; ``None`` flags are ignored.

        Raises:
            ConfigError: On unknown keys or invalid values.
        """

        train_keys = set(TrainConfig.field_names())
        unknown = sorted(set(file_values) - train_keys - RUN_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        merged: Dict[str, Any] = dict(file_values)
        merged.update({k: v for k, v in flag_values.items() if v is not None})
        unknown = sorted(set(merged) - train_keys - RUN_KEYS)
        if unknown:
            raise ConfigError(f"unknown options: {', '.join(unknown)}")

        train_values = {k: v for k, v in merged.items() if k in train_keys}
        run_values = {k: v for k, v in merged.items() if k in RUN_KEYS}
        try:
            train = TrainConfig.from_dict(train_values)
            return cls(train=train, **run_values)
        except TypeError as exc:
            raise ConfigError(f"invalid option type: {exc}") from exc

    def with_train(self, **changes: Any) -> "CliConfig":
        return replace(self, train=replace(self.train, **changes))


RUN_KEYS = frozenset(f.name for f in fields(CliConfig)) - {"train"}


def load_config_file(path: Optional[str]) -> Dict[str, Any]:
    """Read a flat TOML file of options; a ``[train]`` table is flattened.

    Raises:
        ConfigError: If the file cannot be read or parsed.
    """

    if path is None:
        return {}
    try:
        with open(path, "rb") as handle:
            values = tomllib.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid config file {path}: {exc}") from exc
    flat: Dict[str, Any] = {}
    for key, value in values.items():
        if isinstance(value, dict):
            flat.update(value)
        else:
            flat[key] = value
    return flat
