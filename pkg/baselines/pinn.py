"""
Coordinate-network baseline: one tanh MLP (x, t) -> (q̂, v̂) per scenario.

The network is trained by the same engine and the same physics loss as the
operator model. Each sample's window-local coordinates are mapped onto
scenario-global time t / T, so every window constrains one shared field.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from autodiff import graph as G
from autodiff.params import BoundParams, ParamSet
from config.defaults import PINN_DEFAULTS
from data.domain import Lattice
from data.grid import EstimateField
from data.normalization import NormalizationStats
from data.samples import MeasurementWindow, TrainSample
from data.units import UnitSystem
from models.layers import MLP
from models.operator import UntrainedModelError
from physics.fundamental_diagram import FDParams
from physics.losses import PhysicsSettings, fixed_fd_table
from training.trainer import TrainConfig, TrainReport, train

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PINNConfig:
    width: int = PINN_DEFAULTS["width"]
    layers: int = PINN_DEFAULTS["layers"]
    seed: int = PINN_DEFAULTS["seed"]

    def __post_init__(self):
        if self.width < 1 or self.layers < 1:
            raise ValueError(f"PINN needs positive width and layer count, got {self.width}x{self.layers}")

    @classmethod
    def from_dict(cls, values: dict) -> "PINNConfig":
        unknown = set(values) - set(PINN_DEFAULTS)
        if unknown:
            raise ValueError(f"Unknown PINN keys: {sorted(unknown)}")
        merged = {**PINN_DEFAULTS, **values}
        return cls(width=int(merged["width"]), layers=int(merged["layers"]), seed=int(merged["seed"]))


@dataclass
class PINNContext:
    t0: float
    span: float


class PINNModel:
    kind = "pinn"
    learns_fd = False

    def __init__(
        self,
        config: PINNConfig,
        units: UnitSystem,
        length: float,
        horizon: float,
        span: float,
        fixed_fd: Sequence[FDParams],
        stats: Optional[NormalizationStats] = None,
    ):
        if not fixed_fd:
            raise ValueError("PINN needs at least one fixed fundamental diagram")
        self.config = config
        self.units = units
        self.length = float(length)
        self.horizon = float(horizon)
        self.span = float(span)
        self.fixed_fd = tuple(fixed_fd)
        self.stats = stats
        self.params = ParamSet()
        rng = np.random.default_rng(config.seed)
        self.net = MLP(self.params, "pinn", [2] + [config.width] * config.layers + [2], rng)

    @property
    def segments(self) -> int:
        return len(self.fixed_fd)

    def encode(self, bound: BoundParams, window: MeasurementWindow, span: float = None) -> PINNContext:
        return PINNContext(t0=float(window.t0), span=self.span if span is None else float(span))

    def decode(self, bound: BoundParams, context: PINNContext, coords: G.ArrayLike):
        coords = G.as_node(coords)
        if coords.value.ndim == 1:
            coords = G.reshape(coords, (1, 2))
        x = G.index_select(coords, (slice(None), slice(0, 1)))
        t_local = G.index_select(coords, (slice(None), slice(1, 2)))
        t_global = G.add(G.mul(t_local, context.span / self.horizon), context.t0 / self.horizon)
        out = self.net(bound, G.concat([x, t_global], axis=1))
        return G.index_select(out, (slice(None), 0)), G.index_select(out, (slice(None), 1))

    def fd_table(self, bound: BoundParams, context: PINNContext) -> G.GraphNode:
        return fixed_fd_table(self.fixed_fd)

    def to_echo(self) -> dict:
        return {
            "kind": self.kind,
            "pinn": {"width": self.config.width, "layers": self.config.layers, "seed": self.config.seed},
            "units": self.units.to_dict(),
            "length": self.length,
            "horizon": self.horizon,
            "span": self.span,
            "fixed_fd": [fd.to_dict() for fd in self.fixed_fd],
            "stats": None if self.stats is None else self.stats.to_dict(),
        }

    @classmethod
    def from_echo(cls, echo: dict) -> "PINNModel":
        stats = echo.get("stats")
        return cls(
            PINNConfig(**echo["pinn"]),
            UnitSystem.from_dict(echo["units"]),
            length=echo["length"],
            horizon=echo["horizon"],
            span=echo["span"],
            fixed_fd=[FDParams.from_dict(fd) for fd in echo["fixed_fd"]],
            stats=None if stats is None else NormalizationStats.from_dict(stats),
        )


def pinn_field(model: PINNModel, lattice: Lattice) -> EstimateField:
    """Evaluate a trained PINN on a lattice anywhere in [0, T]."""
    if model.stats is None:
        raise UntrainedModelError("PINN has no normalization statistics; train it first")
    coords = lattice.normalized(model.length, 0.0, model.horizon)
    bound = model.params.bind()
    with G.suspend_tangents():
        q_n, v_n = model.decode(bound, PINNContext(t0=0.0, span=model.horizon), G.constant(coords))
    speed = np.maximum(model.stats.unscale(v_n.value, "speed"), 0.0).reshape(lattice.shape)
    flow = np.maximum(model.stats.unscale(q_n.value, "flow"), 0.0).reshape(lattice.shape)
    return EstimateField(lattice=lattice, speed=speed, flow=flow, units=model.units)


def pinn_train_estimate(
    train_samples: Sequence[TrainSample],
    val_samples: Sequence[TrainSample],
    lattice: Lattice,
    units: UnitSystem,
    length: float,
    horizon: float,
    fixed_fd: Sequence[FDParams],
    config: PINNConfig = PINNConfig(),
    train_config: TrainConfig = TrainConfig(),
    settings: Optional[PhysicsSettings] = None,
) -> Tuple[EstimateField, PINNModel, TrainReport]:
    """
    Train a PINN on the samples of a single scenario and evaluate it on a lattice.

    The data and physics losses are the operator model's own; the parameter
    loss is zero because the FDs are fixed.

    Raises:
        TrainingDivergedError: The loss became non-finite
    """
    if not train_samples:
        raise ValueError("PINN needs at least one training sample")
    span = train_samples[0].span
    model = PINNModel(config, units, length, horizon, span, fixed_fd)
    report = train(model, train_samples, val_samples, train_config, settings=settings)
    logger.info("PINN trained for %d steps (best epoch %d)", report.steps, report.best_epoch)
    return pinn_field(model, lattice), model, report
