"""The deep kernel model: network, squash, additive GP layer and mixing head."""

from __future__ import annotations

from dataclasses import dataclass
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.gp.interpolation import InterpRows, interp_rows
from src.gp.variational import GpUnit, KernelGrad, VariationalState
from src.kernels.grid import build_grid
from src.kernels.rbf import RbfParams
from src.likelihood.softmax import MixingMatrix
from src.nn.mlp import MlpCache, MlpSpec, MlpWeights, forward
from src.training.squash import Squash, to_grid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ForwardPass:
    """Everything computed between the raw inputs and the interpolation rows."""

    features: np.ndarray
    cache: MlpCache
    squashed: np.ndarray
    squash_grad: np.ndarray
    rows: Tuple[InterpRows, ...]


def feature_subsets(n_features: int, gp_input_dim: int) -> Tuple[Tuple[int, ...], ...]:
    """Consecutive disjoint feature groups of size ``gp_input_dim``."""

    if n_features % gp_input_dim:
        raise ValueError(
            f"{n_features} features cannot be split into groups of {gp_input_dim}"
        )
    return tuple(
        tuple(range(start, start + gp_input_dim)) for start in range(0, n_features, gp_input_dim)
    )


@dataclass(frozen=True)
class DeepKernelModel:
    """All trainable parameters ``{w, theta, A}`` plus the variational states."""

    spec: MlpSpec
    net: MlpWeights
    gps: Tuple[GpUnit, ...]
    mixing: MixingMatrix
    squash: Squash
    n_total: int

    def __post_init__(self) -> None:
        if self.mixing.n_gps != len(self.gps):
            raise ValueError(
                f"mixing matrix expects {self.mixing.n_gps} GPs, model has {len(self.gps)}"
            )
        for gp in self.gps:
            if max(gp.feature_subset) >= self.n_features:
                raise ValueError(f"GP reads feature outside [0, {self.n_features})")

    @property
    def n_classes(self) -> int:
        return self.mixing.n_classes

    @property
    def n_gps(self) -> int:
        return len(self.gps)

    @property
    def n_features(self) -> int:
        return self.spec.n_outputs

    @classmethod
    def build(
        cls,
        spec: MlpSpec,
        net: MlpWeights,
        features: np.ndarray,
        n_classes: int,
        n_total: int,
        gp_input_dim: int = 1,
        grid_size: int = 16,
        grid_margin: float = 0.1,
    ) -> "DeepKernelModel":
        """Fit the squash to ``features`` and initialize the GP layer at its prior.

        Grids cover the squash range ``[-1, 1]`` plus the margin; the squash
        maps features into the central part of every grid.
        """

        squash = Squash.from_features(features)
        gps = []
        for subset in feature_subsets(spec.n_outputs, gp_input_dim):
            d = len(subset)
            grid = build_grid([-1.0] * d, [1.0] * d, [grid_size] * d, grid_margin)
            kernel = RbfParams.default_for(grid)
            gp = GpUnit(grid, kernel, VariationalState.at_prior(grid, kernel), subset)
            jitter = max(ch.jitter for ch in gp.prior.cholesky)
            if jitter > 0:
                logger.warning(
                    "GP %s prior needs jitter %.3g at grid_size=%s; consider a smaller grid",
                    len(gps),
                    jitter,
                    grid_size,
                )
            gps.append(gp)
        mixing = MixingMatrix.identity(n_classes, len(gps))
        return cls(spec, net, tuple(gps), mixing, squash, int(n_total))

    def forward_inputs(self, x: np.ndarray, with_grad: bool = False) -> ForwardPass:
        """Network features, squashed features and per-GP interpolation rows."""

        features, cache = forward(self.net, x)
        squashed, squash_grad = self.squash.apply(features)
        rows = tuple(
            interp_rows(gp.grid, to_grid(gp.grid, squashed[:, list(gp.feature_subset)]), with_grad)
            for gp in self.gps
        )
        return ForwardPass(features, cache, squashed, squash_grad, rows)

    def leaves(self) -> List[np.ndarray]:
        """Trainable arrays in a fixed order shared with ``MinibatchGrad``."""

        out: List[np.ndarray] = list(self.net.arrays())
        for gp in self.gps:
            out.append(gp.kernel.log_lengthscale)
            out.append(np.array([gp.kernel.log_signal_var]))
        for gp in self.gps:
            out.append(gp.vstate.mu)
            out.extend(gp.vstate.raw_factors)
        out.append(self.mixing.a)
        return out

    def leaf_blocks(self) -> List[str]:
        blocks = ["net"] * len(self.net.arrays())
        blocks += ["kernel"] * (2 * len(self.gps))
        for gp in self.gps:
            blocks += ["variational"] * (1 + len(gp.vstate.raw_factors))
        blocks.append("mixing")
        return blocks

    def leaf_names(self) -> List[str]:
        names = []
        for idx in range(len(self.net.weights)):
            names += [f"net.W{idx}", f"net.b{idx}"]
        for j in range(len(self.gps)):
            names += [f"gp{j}.log_lengthscale", f"gp{j}.log_signal_var"]
        for j, gp in enumerate(self.gps):
            names.append(f"gp{j}.mu")
            names += [f"gp{j}.L{d}" for d in range(len(gp.vstate.raw_factors))]
        names.append("mixing.A")
        return names

    def with_leaves(self, arrays: Sequence[np.ndarray]) -> "DeepKernelModel":
        """Copy of the model with its trainable arrays replaced."""

        arrays = list(arrays)
        n_net = len(self.net.arrays())
        net = MlpWeights.from_arrays(arrays[:n_net])
        pos = n_net
        kernels = []
        for _ in self.gps:
            kernels.append(RbfParams(arrays[pos], float(arrays[pos + 1][0])))
            pos += 2
        gps = []
        for gp, kernel in zip(self.gps, kernels):
            n_factors = len(gp.vstate.raw_factors)
            mu = arrays[pos]
            raws = tuple(arrays[pos + 1 : pos + 1 + n_factors])
            pos += 1 + n_factors
            gps.append(GpUnit(gp.grid, kernel, VariationalState(mu, raws), gp.feature_subset))
        mixing = MixingMatrix(arrays[pos])
        if pos + 1 != len(arrays):
            raise ValueError(f"expected {pos + 1} arrays, got {len(arrays)}")
        return DeepKernelModel(self.spec, net, tuple(gps), mixing, self.squash, self.n_total)


@dataclass(frozen=True)
class MinibatchGrad:
    """Gradient blocks mirroring ``DeepKernelModel`` (ascent direction of the ELBO)."""

    net: MlpWeights
    kernel: Tuple[KernelGrad, ...]
    mu: Tuple[np.ndarray, ...]
    l_factors: Tuple[Tuple[np.ndarray, ...], ...]
    mixing: np.ndarray

    def leaves(self) -> List[np.ndarray]:
        out: List[np.ndarray] = list(self.net.arrays())
        for kg in self.kernel:
            out.append(np.asarray(kg.d_log_lengthscale, dtype=float))
            out.append(np.array([kg.d_log_signal_var]))
        for mu, factors in zip(self.mu, self.l_factors):
            out.append(mu)
            out.extend(factors)
        out.append(self.mixing)
        return out

    def first_non_finite(self) -> Optional[str]:
        """Name of the first block holding a non-finite entry, if any."""

        checks = [
            ("net", self.net.arrays()),
            ("kernel", [np.asarray(kg.d_log_lengthscale) for kg in self.kernel]
             + [np.array([kg.d_log_signal_var]) for kg in self.kernel]),
            ("variational_mu", list(self.mu)),
            ("variational_L", [f for factors in self.l_factors for f in factors]),
            ("mixing", [self.mixing]),
        ]
        for name, arrays in checks:
            if any(not np.all(np.isfinite(a)) for a in arrays):
                return name
        return None
