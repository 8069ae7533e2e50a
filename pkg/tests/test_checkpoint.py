"""Tests for binary model checkpoints."""

import json
import struct

import numpy as np
import pytest

from src.data.checkpoint import (
    FORMAT_VERSION,
    MAGIC,
    ModelCheckpoint,
    from_bytes,
    load_checkpoint,
    save_checkpoint,
    to_bytes,
)
from src.errors import CheckpointError
from src.training.trainer import TrainConfig
from tests.oracle import toy_model


def _checkpoint(gp_input_dim: int = 1) -> ModelCheckpoint:
    model, _, _ = toy_model(seed=21, gp_input_dim=gp_input_dim)
    rng = np.random.default_rng(5)
    rng.standard_normal(3)
    return ModelCheckpoint(
        model=model,
        config=TrainConfig(grid_size=8, hidden_widths=(6,), gp_input_dim=gp_input_dim),
        label_names=("neg", "pos"),
        feature_names=("a", "b"),
        mean=np.array([0.5, -1.0]),
        std=np.array([2.0, 3.0]),
        rng_state=rng.bit_generator.state,
    )


@pytest.mark.parametrize("gp_input_dim", [1, 2])
def test_round_trip_is_byte_stable(gp_input_dim) -> None:
    ckpt = _checkpoint(gp_input_dim)
    blob = to_bytes(ckpt)
    restored = from_bytes(blob)
    assert to_bytes(restored) == blob
    for a, b in zip(ckpt.model.leaves(), restored.model.leaves()):
        np.testing.assert_array_equal(a, b)
    assert restored.config == ckpt.config
    assert restored.label_names == ckpt.label_names
    np.testing.assert_array_equal(restored.model.squash.scale, ckpt.model.squash.scale)
    np.testing.assert_array_equal(restored.std, ckpt.std)


def test_restored_rng_continues_the_stream() -> None:
    ckpt = _checkpoint()
    restored = from_bytes(to_bytes(ckpt))
    original = np.random.default_rng()
    original.bit_generator.state = ckpt.rng_state
    resumed = np.random.default_rng()
    resumed.bit_generator.state = restored.rng_state
    np.testing.assert_array_equal(original.standard_normal(4), resumed.standard_normal(4))


def test_checkpoint_without_normalization(tmp_path) -> None:
    ckpt = _checkpoint()
    plain = ModelCheckpoint(ckpt.model, ckpt.config, ckpt.label_names)
    path = tmp_path / "nested" / "model.ckpt"
    save_checkpoint(plain, path)
    restored = load_checkpoint(path)
    assert restored.normalization is None
    assert restored.rng_state is None


def test_truncated_and_foreign_files_are_rejected(tmp_path) -> None:
    blob = to_bytes(_checkpoint())
    with pytest.raises(CheckpointError, match="magic"):
        from_bytes(b"NOTACKPT" + blob[8:])
    with pytest.raises(CheckpointError, match="header"):
        from_bytes(blob[:20])
    with pytest.raises(CheckpointError, match="payload"):
        from_bytes(blob[:-8])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.ckpt")


def _rewrite_header(blob: bytes, change) -> bytes:
    prefix = len(MAGIC) + 4
    (length,) = struct.unpack("<I", blob[len(MAGIC) : prefix])
    header = json.loads(blob[prefix : prefix + length])
    change(header)
    encoded = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", len(encoded)) + encoded + blob[prefix + length :]


def test_version_and_content_mismatches_are_rejected() -> None:
    blob = to_bytes(_checkpoint())
    with pytest.raises(CheckpointError, match="version"):
        from_bytes(_rewrite_header(blob, lambda h: h.update(version=FORMAT_VERSION + 1)))
    with pytest.raises(CheckpointError, match="inconsistent"):
        from_bytes(_rewrite_header(blob, lambda h: h.update(layer_widths=[2, 6, 6, 2])))
    with pytest.raises(CheckpointError, match="corrupt"):
        from_bytes(MAGIC + struct.pack("<I", 3) + b"{x}")


def _with_header(header) -> bytes:
    encoded = json.dumps(header).encode("utf-8")
    return MAGIC + struct.pack("<I", len(encoded)) + encoded


@pytest.mark.parametrize(
    "header",
    [
        {"version": FORMAT_VERSION, "payload_floats": 0},
        {"version": FORMAT_VERSION, "payload_floats": 0, "structure": 7},
        {"version": FORMAT_VERSION, "payload_floats": 0, "structure": ["w"]},
        {"version": FORMAT_VERSION, "structure": []},
        [FORMAT_VERSION],
        "checkpoint",
    ],
)
def test_incomplete_headers_are_rejected(header) -> None:
    with pytest.raises(CheckpointError):
        from_bytes(_with_header(header))


def test_structure_past_the_payload_is_rejected() -> None:
    blob = to_bytes(_checkpoint())

    def stretch(header):
        header["structure"][0]["offset"] = header["payload_floats"]

    with pytest.raises(CheckpointError, match="inconsistent"):
        from_bytes(_rewrite_header(blob, stretch))
