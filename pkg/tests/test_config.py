"""Tests for environment and per-run configuration."""

import pytest

from src.config import CliConfig, Config, load_config_file
from src.errors import ConfigError


def test_env_defaults(monkeypatch) -> None:
    for name in ("SVDKL_LOG_LEVEL", "SVDKL_THREADS", "SVDKL_OUTPUT_DIR", "SVDKL_COVDUMP_CAP"):
        monkeypatch.delenv(name, raising=False)
    config = Config.from_env()
    assert config.log_level == "INFO"
    assert config.threads == 1
    assert config.covdump_cap == 3000


def test_env_overrides_and_errors(monkeypatch) -> None:
    monkeypatch.setenv("SVDKL_THREADS", "4")
    monkeypatch.setenv("SVDKL_LOG_LEVEL", "debug")
    config = Config.from_env()
    assert config.threads == 4
    assert config.log_level == "DEBUG"
    monkeypatch.setenv("SVDKL_THREADS", "many")
    with pytest.raises(ConfigError):
        Config.from_env()
    monkeypatch.setenv("SVDKL_THREADS", "0")
    with pytest.raises(ConfigError):
        Config.from_env()
    monkeypatch.setenv("SVDKL_THREADS", "2")
    monkeypatch.setenv("SVDKL_LOG_LEVEL", "LOUD")
    with pytest.raises(ConfigError):
        Config.from_env()


def test_flags_override_file_values() -> None:
    cli = CliConfig.merge(
        {"minibatch_size": 64, "lr_net": 0.5, "data": "a.csv"},
        {"minibatch_size": 32, "lr_net": None, "val_fraction": 0.2},
    )
    assert cli.train.minibatch_size == 32
    assert cli.train.lr_net == 0.5
    assert cli.data == "a.csv"
    assert cli.fractions == pytest.approx((0.7, 0.2, 0.1))


def test_merge_rejects_unknown_and_invalid_values() -> None:
    with pytest.raises(ConfigError, match="unknown"):
        CliConfig.merge({"learning_rate": 0.1}, {})
    with pytest.raises(ConfigError):
        CliConfig.merge({}, {"minibatch_size": 0})
    with pytest.raises(ConfigError):
        CliConfig.merge({"val_fraction": 0.6, "test_fraction": 0.5}, {})
    with pytest.raises(ConfigError):
        CliConfig.merge({"format": "libsvm"}, {})


def test_toml_file_is_flattened(tmp_path) -> None:
    path = tmp_path / "run.toml"
    path.write_text(
        'data = "train.csv"\n\n[train]\nhidden_widths = [16, 8]\nepochs_joint = 3\n',
        encoding="utf-8",
    )
    values = load_config_file(str(path))
    assert values == {"data": "train.csv", "hidden_widths": [16, 8], "epochs_joint": 3}
    cli = CliConfig.merge(values, {})
    assert cli.train.hidden_widths == (16, 8)
    assert load_config_file(None) == {}


def test_unreadable_or_invalid_toml(tmp_path) -> None:
    with pytest.raises(ConfigError):
        load_config_file(str(tmp_path / "missing.toml"))
    bad = tmp_path / "bad.toml"
    bad.write_text("minibatch_size = = 3\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config_file(str(bad))


def test_with_train_replaces_training_options() -> None:
    cli = CliConfig.merge({}, {}).with_train(seed=9)
    assert cli.train.seed == 9
    assert cli.label_col == "y"
