"""Versioned binary checkpoints: magic, JSON header, little-endian float64 payload."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.errors import CheckpointError
from src.gp.variational import GpUnit, VariationalState
from src.kernels.grid import Grid1D, InducingGrid
from src.kernels.rbf import RbfParams
from src.likelihood.softmax import MixingMatrix
from src.nn.mlp import MlpSpec, MlpWeights
from src.training.model import DeepKernelModel
from src.training.squash import Squash
from src.training.trainer import TrainConfig

MAGIC = b"SVDKLCKP"
FORMAT_VERSION = 1
_LENGTH = struct.Struct("<I")
_FLOAT = np.dtype("<f8")


@dataclass(frozen=True)
class ModelCheckpoint:
    """Everything needed to evaluate or resume a trained model."""

    model: DeepKernelModel
    config: TrainConfig
    label_names: Tuple[str, ...]
    feature_names: Tuple[str, ...] = ()
    mean: Optional[np.ndarray] = None
    std: Optional[np.ndarray] = None
    rng_state: Optional[Dict[str, Any]] = None

    @property
    def normalization(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        if self.mean is None or self.std is None:
            return None
        return self.mean, self.std


def _named_arrays(ckpt: ModelCheckpoint) -> List[Tuple[str, np.ndarray]]:
    model = ckpt.model
    arrays = list(zip(model.leaf_names(), model.leaves()))
    arrays += [("squash.center", model.squash.center), ("squash.scale", model.squash.scale)]
    if ckpt.normalization is not None:
        arrays += [("norm.mean", ckpt.mean), ("norm.std", ckpt.std)]
    return arrays


def to_bytes(ckpt: ModelCheckpoint) -> bytes:
    """Serialize deterministically: equal checkpoints give identical bytes."""

    model = ckpt.model
    structure = []
    chunks = []
    offset = 0
    for name, array in _named_arrays(ckpt):
        data = np.ascontiguousarray(array, dtype=_FLOAT)
        structure.append({"name": name, "shape": list(data.shape), "offset": offset})
        chunks.append(data.tobytes())
        offset += data.size
    header = {
        "version": FORMAT_VERSION,
        "config": ckpt.config.to_dict(),
        "labels": list(ckpt.label_names),
        "feature_names": list(ckpt.feature_names),
        "layer_widths": list(model.spec.layer_widths),
        "n_total": model.n_total,
        "gps": [
            {
                "feature_subset": list(gp.feature_subset),
                "grid": [[g.lo, g.hi, g.size] for g in gp.grid.dims],
            }
            for gp in model.gps
        ],
        "rng_state": ckpt.rng_state,
        "structure": structure,
        "payload_floats": offset,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + _LENGTH.pack(len(header_bytes)) + header_bytes + b"".join(chunks)


def from_bytes(blob: bytes) -> ModelCheckpoint:
    """Parse a checkpoint; no partial model is returned on failure.

    Raises:
        CheckpointError: On a bad magic, version mismatch, truncation or corrupt header.
    """

    prefix = len(MAGIC) + _LENGTH.size
    if len(blob) < prefix or blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not a model checkpoint (bad magic)")
    (header_len,) = _LENGTH.unpack(blob[len(MAGIC) : prefix])
    if len(blob) < prefix + header_len:
        raise CheckpointError("checkpoint truncated inside the header")
    try:
        header = json.loads(blob[prefix : prefix + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    if not isinstance(header, dict):
        raise CheckpointError("corrupt checkpoint header: not a JSON object")
    version = header.get("version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint version {version} != supported {FORMAT_VERSION}")

    try:
        arrays = _read_arrays(header, blob[prefix + header_len :])
        return _rebuild(header, arrays)
    except CheckpointError:
        raise
    except (AttributeError, IndexError, KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"checkpoint is inconsistent: {exc}") from exc


def _read_arrays(header: Dict[str, Any], payload: bytes) -> Dict[str, np.ndarray]:
    n_floats = int(header["payload_floats"])
    if len(payload) != n_floats * _FLOAT.itemsize:
        raise CheckpointError(
            f"checkpoint payload has {len(payload)} bytes, expected {n_floats * _FLOAT.itemsize}"
        )
    values = np.frombuffer(payload, dtype=_FLOAT)
    arrays: Dict[str, np.ndarray] = {}
    for entry in header["structure"]:
        shape = tuple(int(s) for s in entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        start = int(entry["offset"])
        if start < 0 or start + size > n_floats:
            raise ValueError(f"array {entry['name']!r} runs past the payload")
        arrays[entry["name"]] = values[start : start + size].astype(float).reshape(shape)
    return arrays


def _rebuild(header: Dict[str, Any], arrays: Dict[str, np.ndarray]) -> ModelCheckpoint:
    spec = MlpSpec(tuple(header["layer_widths"]))
    n_layers = len(spec.layer_widths) - 1
    net = MlpWeights(
        tuple(arrays[f"net.W{i}"] for i in range(n_layers)),
        tuple(arrays[f"net.b{i}"] for i in range(n_layers)),
    )
    gps = []
    for j, entry in enumerate(header["gps"]):
        grid = InducingGrid(
            tuple(Grid1D(float(lo), float(hi), int(size)) for lo, hi, size in entry["grid"])
        )
        kernel = RbfParams(
            arrays[f"gp{j}.log_lengthscale"], float(arrays[f"gp{j}.log_signal_var"][0])
        )
        raws = tuple(arrays[f"gp{j}.L{d}"] for d in range(grid.ndim))
        vstate = VariationalState(arrays[f"gp{j}.mu"], raws)
        gps.append(GpUnit(grid, kernel, vstate, tuple(entry["feature_subset"])))
    model = DeepKernelModel(
        spec,
        net,
        tuple(gps),
        MixingMatrix(arrays["mixing.A"]),
        Squash(arrays["squash.center"], arrays["squash.scale"]),
        int(header["n_total"]),
    )
    return ModelCheckpoint(
        model=model,
        config=TrainConfig.from_dict(header["config"]),
        label_names=tuple(header["labels"]),
        feature_names=tuple(header["feature_names"]),
        mean=arrays.get("norm.mean"),
        std=arrays.get("norm.std"),
        rng_state=header["rng_state"],
    )


def save_checkpoint(ckpt: ModelCheckpoint, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(to_bytes(ckpt))


def load_checkpoint(path: Path) -> ModelCheckpoint:
    """Read a checkpoint written by ``save_checkpoint``.

    Raises:
        CheckpointError: If the file is missing, truncated, corrupt or of another version.
    """

    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return from_bytes(blob)
