"""
The operator model: two branches (speed, flow), one trunk, MIMO composition
and an optional parameter network.

    b = b_v + b_q                      (2K branch features, summed)
    v̂(y) = sum_k b[k] t_k(y)           (first K features)
    q̂(y) = sum_k b[K + k] t_k(y)       (second K features)
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from autodiff import graph as G
from autodiff.params import BoundParams, ParamSet
from data.domain import Lattice
from data.grid import EstimateField
from data.normalization import NormalizationStats, normalize
from data.samples import MeasurementWindow
from data.units import UnitSystem
from models.branch import CNNBranch, DenseBranch
from models.configs import ModelConfig
from models.param_net import ParamNet, to_fd_params
from models.trunk import AttentionTrunk, DenseTrunk, attention_trunk_forward
from physics.fundamental_diagram import FDParams
from physics.losses import fixed_fd_table

logger = logging.getLogger(__name__)


class UntrainedModelError(RuntimeError):
    """The model has no normalization statistics yet."""


@dataclass
class OperatorContext:
    """Per-window quantities shared by every query of that window."""

    features: G.GraphNode  # (1, 2K) summed branch output
    fd: Optional[G.GraphNode]  # (C, 3) parameter-net output


class OperatorModel:
    """
    Extended operator network (and its ablations, selected by config flags).

    Attributes:
        config: Architecture echo
        params: Every trainable array (branches, trunk, parameter net)
        stats: Normalization statistics, set from the training split
        units: Dataset units
        length: Stretch length L
        span: Estimation window length used in training (s)
    """

    kind = "operator"

    def __init__(
        self,
        config: ModelConfig,
        units: UnitSystem,
        length: float,
        span: float,
        stats: Optional[NormalizationStats] = None,
    ):
        self.config = config
        self.units = units
        self.length = float(length)
        self.span = float(span)
        self.stats = stats
        self.params = ParamSet()
        rng = np.random.default_rng(config.seed)
        H, W = config.history, config.sensors
        branch = CNNBranch if config.cnn else DenseBranch
        self.speed_branch = branch(self.params, "branch_v", config.branch, H, W, rng)
        self.flow_branch = branch(self.params, "branch_q", config.branch, H, W, rng)
        trunk = AttentionTrunk if config.attention else DenseTrunk
        self.trunk = trunk(self.params, "trunk", config.trunk, rng)
        self.param_net = (
            ParamNet(self.params, "param_net", config.param_net, H, W, rng, cnn=config.cnn)
            if config.learn_fd
            else None
        )
        logger.debug("Built %s operator model with %d weights", config.variant, self.params.size())

    @property
    def learns_fd(self) -> bool:
        return self.param_net is not None

    @property
    def segments(self) -> int:
        return self.config.param_net.segments if self.learns_fd else len(self.config.fixed_fd)

    @property
    def conv_count(self) -> int:
        return self.speed_branch.conv_count + self.flow_branch.conv_count

    def _require_stats(self) -> NormalizationStats:
        if self.stats is None:
            raise UntrainedModelError("Model has no normalization statistics; train it first")
        return self.stats

    def _normalized(self, window: MeasurementWindow) -> MeasurementWindow:
        if window.normalized:
            return window
        return normalize(window, self._require_stats())

    def encode(self, bound: BoundParams, window: MeasurementWindow, span: float = None) -> OperatorContext:
        window = self._normalized(window)
        b_v = self.speed_branch(bound, window.speed)
        b_q = self.flow_branch(bound, window.flow)
        fd = self.param_net(bound, window.speed, window.flow) if self.learns_fd else None
        return OperatorContext(features=G.add(b_v, b_q), fd=fd)

    def decode(self, bound: BoundParams, context: OperatorContext, coords: G.ArrayLike):
        """Normalized (q̂, v̂) at coordinates (N, 2), each of shape (N,)."""
        trunk = attention_trunk_forward(self.trunk, bound, coords)
        return mimo_combine(context.features, trunk)

    def fd_table(self, bound: BoundParams, context: OperatorContext) -> G.GraphNode:
        if context.fd is not None:
            return context.fd
        return fixed_fd_table(self.config.fixed_fd)

    def to_echo(self) -> dict:
        """Everything a checkpoint needs to rebuild this model."""
        return {
            "kind": self.kind,
            "model": self.config.to_dict(),
            "units": self.units.to_dict(),
            "length": self.length,
            "span": self.span,
            "stats": None if self.stats is None else self.stats.to_dict(),
        }

    @classmethod
    def from_echo(cls, echo: dict) -> "OperatorModel":
        stats = echo.get("stats")
        return cls(
            ModelConfig.from_echo(echo["model"]),
            UnitSystem.from_dict(echo["units"]),
            length=echo["length"],
            span=echo["span"],
            stats=None if stats is None else NormalizationStats.from_dict(stats),
        )


def mimo_combine(features: G.GraphNode, trunk: G.GraphNode) -> Tuple[G.GraphNode, G.GraphNode]:
    """
    Combine summed branch features (1, 2K) with trunk features (N, K).

    Returns:
        (q̂, v̂), each of shape (N,)
    """
    K = trunk.shape[1]
    if features.shape[-1] != 2 * K:
        raise G.ShapeError(f"Branch gives {features.shape[-1]} features, trunk K={K} needs {2 * K}")
    features = G.reshape(features, (1, 2 * K))
    speed_row = G.index_select(features, (slice(None), slice(0, K)))
    flow_row = G.index_select(features, (slice(None), slice(K, 2 * K)))
    v_hat = G.sum_(G.mul(speed_row, trunk), axis=1)
    q_hat = G.sum_(G.mul(flow_row, trunk), axis=1)
    return q_hat, v_hat


def mimo_estimate(model: OperatorModel, window_v: np.ndarray, window_q: np.ndarray, y, bound=None):
    """
    (v̂, q̂) nodes for normalized window grids at normalized coordinates y.
    """
    bound = bound or model.params.bind()
    b_v = model.speed_branch(bound, window_v)
    b_q = model.flow_branch(bound, window_q)
    q_hat, v_hat = model.decode(bound, OperatorContext(features=G.add(b_v, b_q), fd=None), y)
    return v_hat, q_hat


def param_net_forward(model: OperatorModel, window_v: np.ndarray, window_q: np.ndarray) -> List[FDParams]:
    """Per-segment FDParams the parameter network assigns to a normalized window."""
    if not model.learns_fd:
        return list(model.config.fixed_fd)
    table = model.param_net(model.params.bind(), window_v, window_q)
    return to_fd_params(table.value)


def estimate_field(
    model, window: MeasurementWindow, lattice: Lattice, span: Optional[float] = None
) -> EstimateField:
    """
    Dense denormalized estimates of any field estimator on a lattice.

    Args:
        model: OperatorModel or PINNModel
        window: Raw measurement window anchored at t0
        lattice: Physical positions and instants within [t0, t0 + span]
        span: Estimation window length (defaults to the model's training span)

    Returns:
        EstimateField in dataset units, clamped non-negative
    """
    stats = model.stats
    if stats is None:
        raise UntrainedModelError("Model has no normalization statistics; train it first")
    span = model.span if span is None else span
    coords = lattice.normalized(model.length, window.t0, span)
    bound = model.params.bind()
    with G.suspend_tangents():
        context = model.encode(bound, window, span)
        q_n, v_n = model.decode(bound, context, G.constant(coords))
    speed = np.maximum(stats.unscale(v_n.value, "speed"), 0.0).reshape(lattice.shape)
    flow = np.maximum(stats.unscale(q_n.value, "flow"), 0.0).reshape(lattice.shape)
    return EstimateField(lattice=lattice, speed=speed, flow=flow, units=model.units)
