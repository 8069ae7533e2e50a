"""First-order optimizers over lists of numpy arrays."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

OPTIMIZER_KINDS = ("sgd", "adam")


@dataclass(frozen=True)
class OptimizerSettings:
    """Optimizer kind, base learning rate and step-decay schedule."""

    kind: str = "adam"
    learning_rate: float = 1e-3
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay_every: int = 0
    decay_gamma: float = 0.5

    def __post_init__(self) -> None:
        if self.kind not in OPTIMIZER_KINDS:
            raise ValueError(f"optimizer kind must be one of {OPTIMIZER_KINDS}, got {self.kind!r}")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be nonnegative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")

    def learning_rate_at(self, epoch: int, base: Optional[float] = None) -> float:
        """Step decay: multiply by ``decay_gamma`` every ``decay_every`` epochs."""

        lr = self.learning_rate if base is None else base
        if self.decay_every > 0:
            lr *= self.decay_gamma ** (epoch // self.decay_every)
        return lr


class Sgd:
    """SGD with heavy-ball momentum (minimizes)."""

    def __init__(self, momentum: float = 0.9) -> None:
        self._momentum = momentum
        self._velocity: Optional[List[np.ndarray]] = None

    def step(
        self,
        params: Sequence[np.ndarray],
        grads: Sequence[np.ndarray],
        lrs: Sequence[float],
    ) -> List[np.ndarray]:
        if self._velocity is None:
            self._velocity = [np.zeros_like(p) for p in params]
        out: List[np.ndarray] = []
        for idx, (p, g, lr) in enumerate(zip(params, grads, lrs)):
            v = self._momentum * self._velocity[idx] - lr * g
            self._velocity[idx] = v
            out.append(p + v)
        return out


class Adam:
    """Adam with bias correction (minimizes)."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        self._beta1 = beta1
        self._beta2 = beta2
        self._eps = eps
        self._t = 0
        self._m: Optional[List[np.ndarray]] = None
        self._v: Optional[List[np.ndarray]] = None

    def step(
        self,
        params: Sequence[np.ndarray],
        grads: Sequence[np.ndarray],
        lrs: Sequence[float],
    ) -> List[np.ndarray]:
        if self._m is None or self._v is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self._t += 1
        c1 = 1.0 - self._beta1**self._t
        c2 = 1.0 - self._beta2**self._t
        out: List[np.ndarray] = []
        for idx, (p, g, lr) in enumerate(zip(params, grads, lrs)):
            self._m[idx] = self._beta1 * self._m[idx] + (1.0 - self._beta1) * g
            self._v[idx] = self._beta2 * self._v[idx] + (1.0 - self._beta2) * g * g
            m_hat = self._m[idx] / c1
            v_hat = self._v[idx] / c2
            out.append(p - lr * m_hat / (np.sqrt(v_hat) + self._eps))
        return out


def build_optimizer(settings: OptimizerSettings):
    """Instantiate the optimizer named by ``settings.kind``."""

    if settings.kind == "sgd":
        return Sgd(settings.momentum)
    return Adam(settings.beta1, settings.beta2, settings.eps)
