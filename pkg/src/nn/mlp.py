"""Fully-connected ReLU feature extractor with manual backpropagation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import log_softmax, softmax

from src.errors import TrainingDivergedError
from src.logging_config import get_logger
from src.nn.optim import OptimizerSettings, build_optimizer


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths ``(d, hidden..., Q)``; ReLU on hidden layers, identity on output."""

    layer_widths: Tuple[int, ...]

    def __post_init__(self) -> None:
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 3:
            raise ValueError("an MLP needs an input width, at least one hidden layer and an output")
        if any(w <= 0 for w in widths):
            raise ValueError(f"layer widths must be positive, got {widths}")

    @property
    def n_inputs(self) -> int:
        return self.layer_widths[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_widths[-1]


@dataclass(frozen=True)
class MlpWeights:
    """Per-layer ``(W, b)`` with ``W`` of shape ``(fan_in, fan_out)``."""

    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]

    @property
    def widths(self) -> Tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def arrays(self) -> List[np.ndarray]:
        out: List[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray]) -> "MlpWeights":
        return cls(tuple(arrays[0::2]), tuple(arrays[1::2]))

    def zeros_like(self) -> "MlpWeights":
        return MlpWeights.from_arrays([np.zeros_like(a) for a in self.arrays()])


@dataclass(frozen=True)
class MlpCache:
    """Activations saved by ``forward`` for ``backward``."""

    inputs: np.ndarray
    pre_activations: Tuple[np.ndarray, ...]
    activations: Tuple[np.ndarray, ...]
    fingerprint: Tuple[int, ...] = field(default=())


def _fingerprint(w: MlpWeights) -> Tuple[int, ...]:
    return tuple(id(a) for a in w.arrays())


def init_weights(spec: MlpSpec, rng: np.random.Generator) -> MlpWeights:
    """He-uniform weights, zero biases."""

    weights = []
    biases = []
    widths = spec.layer_widths
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpWeights(tuple(weights), tuple(biases))


def forward(w: MlpWeights, x_batch: np.ndarray) -> Tuple[np.ndarray, MlpCache]:
    """Top-layer features and the cache needed by ``backward``.

    Raises:
        ValueError: If the input width does not match the first layer.
    """

    x = np.asarray(x_batch, dtype=float)
    if x.ndim != 2 or x.shape[1] != w.weights[0].shape[0]:
        raise ValueError(
            f"input of shape {x.shape} does not match network input width {w.weights[0].shape[0]}"
        )
    pre: List[np.ndarray] = []
    acts: List[np.ndarray] = []
    h = x
    last = len(w.weights) - 1
    for idx, (weight, bias) in enumerate(zip(w.weights, w.biases)):
        z = h @ weight + bias
        pre.append(z)
        h = z if idx == last else np.maximum(z, 0.0)
        acts.append(h)
    return h, MlpCache(x, tuple(pre), tuple(acts), _fingerprint(w))


def backward(
    w: MlpWeights, cache: MlpCache, d_features: np.ndarray
) -> Tuple[MlpWeights, np.ndarray]:
    """Reverse-mode gradients of a scalar w.r.t. weights and inputs.

    Raises:
        RuntimeError: If ``cache`` was produced by different weights.
    """

    if cache.fingerprint != _fingerprint(w):
        raise RuntimeError("stale forward cache: weights changed since forward")
    delta = np.asarray(d_features, dtype=float)
    grads_w: List[np.ndarray] = [np.empty(0)] * len(w.weights)
    grads_b: List[np.ndarray] = [np.empty(0)] * len(w.weights)
    last = len(w.weights) - 1
    for idx in range(last, -1, -1):
        if idx != last:
            delta = delta * (cache.pre_activations[idx] > 0.0)
        layer_input = cache.inputs if idx == 0 else cache.activations[idx - 1]
        grads_w[idx] = layer_input.T @ delta
        grads_b[idx] = delta.sum(axis=0)
        delta = delta @ w.weights[idx].T
    return MlpWeights(tuple(grads_w), tuple(grads_b)), delta


def softmax_loss(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""

    n = logits.shape[0]
    logp = log_softmax(logits, axis=1)
    loss = -float(np.mean(logp[np.arange(n), labels]))
    grad = softmax(logits, axis=1)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


@dataclass(frozen=True)
class PretrainResult:
    """Pretrained network plus the per-epoch training loss."""

    weights: MlpWeights
    head: Optional[Tuple[np.ndarray, np.ndarray]]
    losses: List[float]


def _with_head(
    w: MlpWeights, head: Optional[Tuple[np.ndarray, np.ndarray]]
) -> MlpWeights:
    if head is None:
        return w
    return MlpWeights(w.weights + (head[0],), w.biases + (head[1],))


def pretrain(
    w: MlpWeights,
    x: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    epochs: int,
    settings: OptimizerSettings,
    batch_size: int,
    rng: np.random.Generator,
) -> PretrainResult:
    """Train the network alone with the softmax loss.

    When the network output width differs from ``n_classes`` a temporary
    linear head is trained on top and returned separately.

    Raises:
        TrainingDivergedError: If the loss becomes non-finite; carries the last
            finite weights.
    """

    logger = get_logger(__name__)
    q = w.weights[-1].shape[1]
    head: Optional[Tuple[np.ndarray, np.ndarray]] = None
    if q != n_classes:
        limit = np.sqrt(6.0 / (q + n_classes))
        head = (rng.uniform(-limit, limit, size=(q, n_classes)), np.zeros(n_classes))

    net = _with_head(w, head)
    optimizer = build_optimizer(settings)
    n = x.shape[0]
    losses: List[float] = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            logits, cache = forward(net, x[idx])
            loss, d_logits = softmax_loss(logits, y[idx])
            if not np.isfinite(loss):
                last = MlpWeights(net.weights[: len(w.weights)], net.biases[: len(w.biases)])
                raise TrainingDivergedError(
                    f"pretraining loss became non-finite in epoch {epoch}", last_finite=last
                )
            grads, _ = backward(net, cache, d_logits)
            lr = settings.learning_rate_at(epoch)
            new_arrays = optimizer.step(net.arrays(), grads.arrays(), [lr] * len(net.arrays()))
            net = MlpWeights.from_arrays(new_arrays)
            epoch_loss += loss * len(idx)
        losses.append(epoch_loss / n)
        logger.debug("Pretrain epoch %s loss=%.5f", epoch, losses[-1])

    n_layers = len(w.weights)
    trained = MlpWeights(net.weights[:n_layers], net.biases[:n_layers])
    trained_head = (net.weights[-1], net.biases[-1]) if head is not None else None
    return PretrainResult(trained, trained_head, losses)


def classify(
    w: MlpWeights, x: np.ndarray, head: Optional[Tuple[np.ndarray, np.ndarray]] = None
) -> np.ndarray:
    """Class probabilities of the stand-alone network."""

    logits, _ = forward(_with_head(w, head), x)
    return softmax(logits, axis=1)
