"""Minibatch ELBO estimation and the pretrain -> GP fit -> joint training pipeline."""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from src.data.dataset import Dataset
from src.errors import ConfigError, NonFiniteElboError, OutOfGridError, TrainingDivergedError
from src.gp.interpolation import apply_m_grad, dense_rows
from src.gp.variational import (
    KernelGrad,
    backprop_f_to_variational,
    kl_grad_theta,
    kl_grad_variational,
    kl_value,
    latent_f,
    sample_u,
)
from src.likelihood.softmax import class_logprobs, loglik_grad, nlp_metric, one_hot, predict
from src.linalg.kron import kron_mvm
from src.logging_config import get_logger
from src.nn.mlp import MlpSpec, MlpWeights, backward, classify, forward, init_weights, pretrain
from src.nn.optim import OPTIMIZER_KINDS, OptimizerSettings, build_optimizer
from src.training.model import DeepKernelModel, MinibatchGrad
from src.training.squash import grid_affine
from src.ui.report import write_matrix_csv, write_pgm

logger = get_logger(__name__)

Noise = Tuple[Tuple[np.ndarray, ...], ...]
# per GP: KL, kernel grad, mu grad, raw L grads, grid-coordinate grads
_GpBackprop = Tuple[float, KernelGrad, np.ndarray, Tuple[np.ndarray, ...], np.ndarray]
T = TypeVar("T")
R = TypeVar("R")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the three training phases."""

    minibatch_size: int = 256
    samples: int = 1
    lr_net: float = 1e-3
    lr_kernel: float = 1e-2
    lr_variational: float = 1e-2
    lr_mixing: float = 1e-3
    epochs_pretrain: int = 20
    epochs_gp: int = 10
    epochs_joint: int = 20
    seed: int = 0
    grid_size: int = 16
    grid_margin: float = 0.1
    optimizer: str = "adam"
    pretrain_optimizer: str = "sgd"
    pretrain_lr: float = 1e-2
    momentum: float = 0.9
    decay_every: int = 0
    decay_gamma: float = 0.5
    hidden_widths: Tuple[int, ...] = (64, 32)
    feature_dim: Optional[int] = None
    gp_input_dim: int = 1
    predict_samples: int = 16
    threads: int = 1
    patience: int = 0
    train_fraction: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.minibatch_size < 1:
            raise ConfigError(f"minibatch_size must be >= 1, got {self.minibatch_size}")
        if self.samples < 1:
            raise ConfigError(f"samples must be >= 1, got {self.samples}")
        for name in ("lr_net", "lr_kernel", "lr_variational", "lr_mixing", "pretrain_lr"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        for name in ("epochs_pretrain", "epochs_gp", "epochs_joint", "patience", "decay_every"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        for name in ("optimizer", "pretrain_optimizer"):
            if getattr(self, name) not in OPTIMIZER_KINDS:
                raise ConfigError(f"{name} must be one of {OPTIMIZER_KINDS}")
        if self.grid_size < 4:
            raise ConfigError(f"grid_size must be >= 4, got {self.grid_size}")
        if self.grid_margin < 0:
            raise ConfigError("grid_margin must be nonnegative")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if not self.hidden_widths or any(w <= 0 for w in self.hidden_widths):
            raise ConfigError("hidden_widths needs at least one positive width")
        if self.gp_input_dim not in (1, 2, 3):
            raise ConfigError(f"gp_input_dim must be 1, 2 or 3, got {self.gp_input_dim}")
        if self.feature_dim is not None and (
            self.feature_dim < 1 or self.feature_dim % self.gp_input_dim
        ):
            raise ConfigError("feature_dim must be a positive multiple of gp_input_dim")
        if self.predict_samples < 0:
            raise ConfigError("predict_samples must be nonnegative")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ConfigError("train_fraction must lie in (0, 1]")

    @classmethod
    def field_names(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["hidden_widths"] = list(self.hidden_widths)
        return out

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "TrainConfig":
        unknown = sorted(set(values) - set(cls.field_names()))
        if unknown:
            raise ConfigError(f"unknown training options: {', '.join(unknown)}")
        values = dict(values)
        if "hidden_widths" in values:
            values["hidden_widths"] = tuple(values["hidden_widths"])
        return cls(**values)

    def n_features(self, n_classes: int) -> int:
        return self.feature_dim if self.feature_dim is not None else n_classes * self.gp_input_dim

    def mlp_spec(self, n_inputs: int, n_classes: int) -> MlpSpec:
        return MlpSpec((n_inputs,) + self.hidden_widths + (self.n_features(n_classes),))


@dataclass(frozen=True)
class ElboEstimate:
    """Scaled likelihood term, summed KL, and their difference."""

    value: float
    likelihood: float
    kl: float


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    nlp: float


@dataclass
class TrainingLog:
    """Line-delimited training records: ELBO per iteration and metrics per epoch."""

    records: List[Dict[str, Any]] = field(default_factory=list)
    started: float = field(default_factory=time.perf_counter)

    def log_iteration(self, phase: str, iteration: int, elbo: float) -> None:
        self.records.append(
            {
                "phase": phase,
                "iteration": iteration,
                "elbo": elbo,
                "wall_time": time.perf_counter() - self.started,
            }
        )

    def log_epoch(self, phase: str, epoch: int, metrics: Metrics) -> None:
        self.records.append(
            {"phase": phase, "epoch": epoch, "accuracy": metrics.accuracy, "nlp": metrics.nlp}
        )

    def elbo_trace(self, phase: Optional[str] = None) -> List[float]:
        return [
            r["elbo"]
            for r in self.records
            if "elbo" in r and (phase is None or r["phase"] == phase)
        ]

    def write_jsonl(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as handle:
            for record in self.records:
                handle.write(json.dumps(record, sort_keys=True) + "\n")


@dataclass(frozen=True)
class FitResult:
    """Trained model, its log, and held-out metrics after each phase."""

    model: DeepKernelModel
    log: TrainingLog
    baselines: Dict[str, Metrics]
    pretrain_losses: List[float]


def _map(fn: Callable[[T], R], items: Sequence[T], threads: int) -> List[R]:
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def draw_noise(model: DeepKernelModel, samples: int, rng: np.random.Generator) -> Noise:
    """Standard normal noise ``noise[t][j]`` for every sample and GP."""

    return tuple(
        tuple(rng.standard_normal(gp.vstate.size) for gp in model.gps) for _ in range(samples)
    )


def elbo_minibatch(
    model: DeepKernelModel,
    x: np.ndarray,
    y: np.ndarray,
    noise: Noise,
    net_grad: bool = True,
    threads: int = 1,
) -> Tuple[ElboEstimate, MinibatchGrad]:
    """Stochastic ELBO ``(N/TB) sum_t sum_i log p(y_i | f_i^t) - sum_j KL_j`` and its gradient.

    The gradient is the ascent direction. ``noise`` is held fixed, so repeated
    calls are deterministic. With ``net_grad=False`` the network block is zero.

    Raises:
        ValueError: If the batch is empty or the noise does not match the model.
        NonFiniteElboError: If the value or a gradient block is not finite.
    """

    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    batch = x.shape[0]
    if batch == 0:
        raise ValueError("minibatch is empty")
    if not noise or any(len(per_t) != model.n_gps for per_t in noise):
        raise ValueError("noise must hold one vector per GP for at least one sample")
    samples = len(noise)
    scale = model.n_total / (samples * batch)
    y_onehot = one_hot(y, model.n_classes)

    fwd = model.forward_inputs(x, with_grad=net_grad)
    if not np.all(np.isfinite(fwd.features)):
        raise NonFiniteElboError("net")
    gp_ids = list(range(model.n_gps))

    def _sample(j: int) -> Tuple[List[np.ndarray], List[np.ndarray]]:
        gp = model.gps[j]
        us = [sample_u(gp.vstate, noise[t][j]) for t in range(samples)]
        return us, [latent_f(gp, fwd.rows[j], u) for u in us]

    sampled = _map(_sample, gp_ids, threads)
    loglik = 0.0
    d_mixing = np.zeros_like(model.mixing.a)
    d_f: List[np.ndarray] = []
    for t in range(samples):
        f_t = np.column_stack([sampled[j][1][t] for j in gp_ids])
        logp = class_logprobs(model.mixing, f_t)
        loglik += float(np.sum(logp * y_onehot))
        d_a, d_f_t = loglik_grad(model.mixing, f_t, y_onehot)
        d_mixing += d_a
        d_f.append(d_f_t)
    likelihood = scale * loglik

    grid_slopes = [grid_affine(gp.grid)[1] for gp in model.gps]

    def _backprop(j: int) -> _GpBackprop:
        gp = model.gps[j]
        rows = fwd.rows[j]
        lower = gp.vstate.l_factors
        g_mu = np.zeros(gp.vstate.size)
        g_l = [np.zeros_like(f) for f in lower.factors]
        d_coords = np.zeros((batch, gp.grid.ndim))
        for t in range(samples):
            dl_df = scale * d_f[t][:, j]
            mu_t, l_t = backprop_f_to_variational(rows, dl_df, noise[t][j], lower)
            g_mu += mu_t
            for acc, part in zip(g_l, l_t):
                acc += part
            if net_grad:
                d_coords += dl_df[:, None] * apply_m_grad(rows, sampled[j][0][t])
        kl = kl_value(gp)
        kl_mu, kl_l = kl_grad_variational(gp)
        kg = kl_grad_theta(gp)
        theta = KernelGrad(-kg.d_log_lengthscale, -kg.d_log_signal_var)
        mapped = [acc - k for acc, k in zip(g_l, kl_l)]
        return kl, theta, g_mu - kl_mu, gp.vstate.raw_grad(mapped), d_coords * grid_slopes[j]

    parts = _map(_backprop, gp_ids, threads)
    kl_total = float(sum(p[0] for p in parts))

    if net_grad:
        d_squashed = np.zeros_like(fwd.squashed)
        for gp, part in zip(model.gps, parts):
            d_squashed[:, list(gp.feature_subset)] += part[4]
        net_grads, _ = backward(model.net, fwd.cache, d_squashed * fwd.squash_grad)
    else:
        net_grads = model.net.zeros_like()

    estimate = ElboEstimate(likelihood - kl_total, likelihood, kl_total)
    grad = MinibatchGrad(
        net=net_grads,
        kernel=tuple(p[1] for p in parts),
        mu=tuple(p[2] for p in parts),
        l_factors=tuple(p[3] for p in parts),
        mixing=scale * d_mixing,
    )
    if not np.isfinite(likelihood):
        raise NonFiniteElboError("likelihood")
    if not np.isfinite(kl_total):
        raise NonFiniteElboError("kl")
    bad = grad.first_non_finite()
    if bad is not None:
        raise NonFiniteElboError(bad)
    return estimate, grad


def evaluate(
    model: DeepKernelModel,
    dataset: Dataset,
    s_samples: int = 16,
    rng: Optional[np.random.Generator] = None,
) -> Metrics:
    """Accuracy and mean negative log probability over ``dataset``."""

    prediction = predict(model, dataset.x, s_samples, rng)
    accuracy = float(np.mean(prediction.labels == dataset.y))
    return Metrics(accuracy, nlp_metric(prediction.probabilities, dataset.y))


def _net_metrics(
    net: MlpWeights, head: Optional[Tuple[np.ndarray, np.ndarray]], dataset: Dataset
) -> Metrics:
    probs = classify(net, dataset.x, head)
    accuracy = float(np.mean(np.argmax(probs, axis=1) == dataset.y))
    return Metrics(accuracy, nlp_metric(probs, dataset.y))


def _block_rates(
    model: DeepKernelModel,
    config: TrainConfig,
    settings: OptimizerSettings,
    epoch: int,
    train_net: bool,
) -> List[float]:
    base = {
        "net": config.lr_net if train_net else 0.0,
        "kernel": config.lr_kernel,
        "variational": config.lr_variational,
        "mixing": config.lr_mixing,
    }
    return [settings.learning_rate_at(epoch, base[block]) for block in model.leaf_blocks()]


def _run_phase(
    phase: str,
    model: DeepKernelModel,
    train: Dataset,
    config: TrainConfig,
    epochs: int,
    rng: np.random.Generator,
    log: TrainingLog,
    iteration: int,
    validation: Optional[Dataset],
) -> Tuple[DeepKernelModel, int]:
    train_net = phase == "joint"
    settings = OptimizerSettings(
        kind=config.optimizer,
        learning_rate=config.lr_net,
        momentum=config.momentum,
        decay_every=config.decay_every,
        decay_gamma=config.decay_gamma,
    )
    optimizer = build_optimizer(settings)
    n = train.n
    track = phase == "joint" and config.patience > 0 and validation is not None
    best_model = model
    best_nlp = np.inf
    stale = 0
    for epoch in range(epochs):
        order = rng.permutation(n)
        lrs = _block_rates(model, config, settings, epoch, train_net)
        for start in range(0, n, config.minibatch_size):
            idx = order[start : start + config.minibatch_size]
            noise = draw_noise(model, config.samples, rng)
            try:
                estimate, grad = elbo_minibatch(
                    model, train.x[idx], train.y[idx], noise, train_net, config.threads
                )
            except (NonFiniteElboError, OutOfGridError) as exc:
                raise TrainingDivergedError(
                    f"{phase} phase diverged at iteration {iteration}: {exc}", last_finite=model
                ) from exc
            log.log_iteration(phase, iteration, estimate.value)
            logger.debug("%s iteration %s elbo=%.5f", phase, iteration, estimate.value)
            new_leaves = optimizer.step(model.leaves(), [-g for g in grad.leaves()], lrs)
            if not all(np.all(np.isfinite(a)) for a in new_leaves):
                raise TrainingDivergedError(
                    f"{phase} phase produced non-finite parameters at iteration {iteration}",
                    last_finite=model,
                )
            model = model.with_leaves(new_leaves)
            iteration += 1

        if validation is None:
            continue
        metrics = evaluate(
            model, validation, config.predict_samples, np.random.default_rng(config.seed)
        )
        log.log_epoch(phase, epoch, metrics)
        logger.info(
            "%s epoch %s accuracy=%.4f nlp=%.4f", phase, epoch, metrics.accuracy, metrics.nlp
        )
        if not track:
            continue
        if metrics.nlp < best_nlp:
            best_nlp, best_model, stale = metrics.nlp, model, 0
            continue
        stale += 1
        if stale >= config.patience:
            logger.info("Early stopping after epoch %s (best nlp=%.4f)", epoch, best_nlp)
            break
    return (best_model if track else model), iteration


def fit(
    dataset: Dataset,
    config: TrainConfig,
    validation: Optional[Dataset] = None,
    net: Optional[MlpWeights] = None,
) -> FitResult:
    """Pretrain the network, fit the GP layer on frozen features, then train jointly.

    ``net`` overrides the seeded network initialization. Baseline metrics are
    taken on ``validation`` when given, otherwise on the training data.

    Grids are not placed on the empirical feature range. They are fixed on
    ``[-1, 1]`` plus ``grid_margin``, and a squash fitted to the pretrained
    features maps them into the central part of that range. Up to this affine
    map the two placements coincide, and a fixed grid stays valid while the
    network moves during the joint phase.

    Raises:
        ValueError: If the dataset is empty or the network does not match it.
        TrainingDivergedError: If any phase produces non-finite values.
    """

    if dataset.n == 0:
        raise ValueError("training dataset is empty")
    rng = np.random.default_rng(config.seed)
    train = dataset
    if config.train_fraction < 1.0:
        keep = max(1, int(round(config.train_fraction * dataset.n)))
        train = dataset.subset(np.sort(rng.permutation(dataset.n)[:keep]))
        logger.info("Training on %s of %s points", train.n, dataset.n)

    n_classes = dataset.n_classes
    spec = config.mlp_spec(dataset.n_features, n_classes)
    if net is None:
        net = init_weights(spec, rng)
    elif net.widths != spec.layer_widths:
        raise ValueError(f"network widths {net.widths} do not match {spec.layer_widths}")

    holdout = validation if validation is not None else train
    log = TrainingLog()
    baselines: Dict[str, Metrics] = {}

    logger.info("Phase pretrain: %s epochs, network %s", config.epochs_pretrain, spec.layer_widths)
    pretrained = pretrain(
        net,
        train.x,
        train.y,
        n_classes,
        config.epochs_pretrain,
        OptimizerSettings(
            kind=config.pretrain_optimizer,
            learning_rate=config.pretrain_lr,
            momentum=config.momentum,
            decay_every=config.decay_every,
            decay_gamma=config.decay_gamma,
        ),
        config.minibatch_size,
        rng,
    )
    net = pretrained.weights
    if spec.n_outputs == n_classes or pretrained.head is not None:
        baselines["dnn"] = _net_metrics(net, pretrained.head, holdout)
        logger.info(
            "DNN baseline accuracy=%.4f nlp=%.4f",
            baselines["dnn"].accuracy,
            baselines["dnn"].nlp,
        )

    features, _ = forward(net, train.x)
    model = DeepKernelModel.build(
        spec,
        net,
        features,
        n_classes,
        train.n,
        gp_input_dim=config.gp_input_dim,
        grid_size=config.grid_size,
        grid_margin=config.grid_margin,
    )

    logger.info("Phase gp: %s GPs, %s epochs", model.n_gps, config.epochs_gp)
    iteration = 0
    model, iteration = _run_phase(
        "gp", model, train, config, config.epochs_gp, rng, log, iteration, validation
    )
    baselines["dnn_gp"] = evaluate(
        model, holdout, config.predict_samples, np.random.default_rng(config.seed)
    )

    logger.info("Phase joint: %s epochs", config.epochs_joint)
    model, iteration = _run_phase(
        "joint", model, train, config, config.epochs_joint, rng, log, iteration, validation
    )
    baselines["svdkl"] = evaluate(
        model, holdout, config.predict_samples, np.random.default_rng(config.seed)
    )
    logger.info(
        "Finished %s iterations: accuracy=%.4f nlp=%.4f",
        iteration,
        baselines["svdkl"].accuracy,
        baselines["svdkl"].nlp,
    )
    return FitResult(model, log, baselines, pretrained.losses)


def induced_covariance(
    model: DeepKernelModel, x: np.ndarray, gp_index: int, cap: int = 3000
) -> np.ndarray:
    """Covariance ``M S M^T`` of GP ``gp_index`` under ``q`` at the inputs ``x``.

    Raises:
        ConfigError: If ``gp_index`` is invalid or ``x`` has more than ``cap`` rows.
    """

    if not 0 <= gp_index < model.n_gps:
        raise ConfigError(f"GP index {gp_index} outside [0, {model.n_gps})")
    x = np.asarray(x, dtype=float)
    if x.shape[0] > cap:
        raise ConfigError(
            f"{x.shape[0]} inputs exceed the covariance cap of {cap}; subsample the inputs"
        )
    gp = model.gps[gp_index]
    rows = model.forward_inputs(x).rows[gp_index]
    # B = L^T M^T, so M S M^T = B^T B
    b = kron_mvm(gp.vstate.l_factors.transposed(), dense_rows(rows).T)
    cov = b.T @ b
    return 0.5 * (cov + cov.T)


def dump_covariance(
    model: DeepKernelModel,
    x: np.ndarray,
    gp_index: int,
    out_dir: Path,
    cap: int = 3000,
) -> np.ndarray:
    """Write ``cov_gp<j>.csv``, ``cov_gp<j>.pgm`` and ``mixing.csv`` into ``out_dir``.

    ``x`` should be sorted by label so that class blocks line up.
    """

    cov = induced_covariance(model, x, gp_index, cap)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(out_dir / f"cov_gp{gp_index}.csv", cov)
    write_pgm(out_dir / f"cov_gp{gp_index}.pgm", cov)
    write_matrix_csv(out_dir / "mixing.csv", model.mixing.a)
    logger.info("Wrote covariance of GP %s over %s inputs to %s", gp_index, cov.shape[0], out_dir)
    return cov
