"""Linear mixing layer and softmax observation model."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Tuple

import numpy as np
from scipy.special import log_softmax, softmax

from src.gp.interpolation import apply_m
from src.gp.variational import sample_u

if TYPE_CHECKING:
    from src.training.model import DeepKernelModel

PROBABILITY_FLOOR = 1e-12
DEFAULT_PREDICT_SAMPLES = 16


@dataclass(frozen=True)
class MixingMatrix:
    """``C x J`` matrix mixing GP outputs into class logits."""

    a: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=float)
        if a.ndim != 2:
            raise ValueError(f"mixing matrix must be 2-D, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("mixing matrix must be finite")
        object.__setattr__(self, "a", a)

    @property
    def n_classes(self) -> int:
        return int(self.a.shape[0])

    @property
    def n_gps(self) -> int:
        return int(self.a.shape[1])

    @classmethod
    def identity(cls, n_classes: int, n_gps: int) -> "MixingMatrix":
        """Identity when ``C == J``; otherwise the rectangular ``eye``."""

        return cls(np.eye(n_classes, n_gps))


@dataclass(frozen=True)
class Prediction:
    """Predictive class probabilities and argmax labels."""

    probabilities: np.ndarray
    labels: np.ndarray


def _as_matrix(a: MixingMatrix, f: np.ndarray) -> Tuple[np.ndarray, bool]:
    f = np.asarray(f, dtype=float)
    single = f.ndim == 1
    f2 = f[None, :] if single else f
    if f2.shape[1] != a.n_gps:
        raise ValueError(f"latent values have {f2.shape[1]} columns, mixing expects {a.n_gps}")
    return f2, single


def class_logprobs(a: MixingMatrix, f: np.ndarray) -> np.ndarray:
    """``log softmax(A f)`` for a vector ``f`` in ``R^J`` or a batch ``(n, J)``."""

    f2, single = _as_matrix(a, f)
    out = log_softmax(f2 @ a.a.T, axis=1)
    return out[0] if single else out


def _check_one_hot(y: np.ndarray, n_classes: int) -> None:
    if y.shape[-1] != n_classes:
        raise ValueError(f"labels have {y.shape[-1]} columns, expected {n_classes}")
    ones = np.isclose(y, 1.0)
    if not (np.all(ones | (y == 0.0)) and np.all(ones.sum(axis=-1) == 1)):
        raise ValueError("labels must be one-hot rows")


def loglik_grad(
    a: MixingMatrix, f: np.ndarray, y: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients of ``sum_i log p(y_i | f_i)`` w.r.t. ``A`` and ``f``.

    ``dL/df = (y - p) A`` and ``dL/dA = (y - p)^T f``.

    Raises:
        ValueError: If ``y`` is not one-hot.
    """

    f2, single = _as_matrix(a, f)
    y2 = np.atleast_2d(np.asarray(y, dtype=float))
    _check_one_hot(y2, a.n_classes)
    resid = y2 - softmax(f2 @ a.a.T, axis=1)
    d_f = resid @ a.a
    d_a = resid.T @ f2
    return d_a, (d_f[0] if single else d_f)


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def predict(
    model: "DeepKernelModel",
    x_batch: np.ndarray,
    s_samples: int = DEFAULT_PREDICT_SAMPLES,
    rng: Optional[np.random.Generator] = None,
) -> Prediction:
    """Predictive probabilities averaged over ``s_samples`` posterior draws of ``u``.

    ``s_samples == 0`` plugs in the variational mean ``u = mu``.
    """

    if s_samples < 0:
        raise ValueError("s_samples must be nonnegative")
    rng = np.random.default_rng() if rng is None else rng
    rows = model.forward_inputs(x_batch).rows
    mixing = model.mixing

    def _latent(us) -> np.ndarray:
        return np.column_stack([apply_m(r, u) for r, u in zip(rows, us)])

    if s_samples == 0:
        probs = softmax(_latent([gp.vstate.mu for gp in model.gps]) @ mixing.a.T, axis=1)
    else:
        probs = np.zeros((rows[0].n, mixing.n_classes))
        for _ in range(s_samples):
            us = [sample_u(gp.vstate, rng.standard_normal(gp.vstate.size)) for gp in model.gps]
            probs += softmax(_latent(us) @ mixing.a.T, axis=1)
        probs /= s_samples
        probs /= probs.sum(axis=1, keepdims=True)
    return Prediction(probs, np.argmax(probs, axis=1))


def nlp_metric(probabilities: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log probability of the true class (floored at 1e-12)."""

    probabilities = np.asarray(probabilities, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    picked = probabilities[np.arange(labels.shape[0]), labels]
    return float(-np.mean(np.log(np.maximum(picked, PROBABILITY_FLOOR))))
