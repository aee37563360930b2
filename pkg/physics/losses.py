import logging
from dataclasses import dataclass, field
from typing import Any, Optional, Protocol, Sequence, Tuple

import numpy as np

from autodiff import graph as G
from autodiff.params import BoundParams, ParamSet
from config.defaults import PHYSICS_DEFAULTS
from data.normalization import NormalizationStats
from data.samples import MeasurementWindow, TrainSample
from data.units import UnitSystem
from physics.fundamental_diagram import FDParams, PWConstants, fd_speed
from physics.residuals import Geometry, ResidualPair, pw_residuals

logger = logging.getLogger(__name__)


class FieldEstimator(Protocol):
    """
    What the losses need from a model: normalized (q, v) at coordinates and
    per-segment FD parameters, both as graph nodes.
    """

    params: ParamSet
    stats: NormalizationStats
    units: UnitSystem
    length: float
    segments: int
    learns_fd: bool

    def encode(self, bound: BoundParams, window: MeasurementWindow, span: float) -> Any:
        ...

    def decode(self, bound: BoundParams, context: Any, coords: G.GraphNode) -> Tuple[G.GraphNode, G.GraphNode]:
        ...

    def fd_table(self, bound: BoundParams, context: Any) -> G.GraphNode:
        ...


@dataclass(frozen=True)
class PhysicsSettings:
    """
    Attributes:
        constants: PW tau and c
        q_floor: Flow floor as a fraction of the flow normalization scale
        v_floor: Speed floor in dataset speed units
        residual_scales: (s1, s2) dividing f1 and f2 in the physics loss
    """

    constants: PWConstants = field(default_factory=PWConstants)
    q_floor: float = PHYSICS_DEFAULTS["q_floor"]
    v_floor: float = PHYSICS_DEFAULTS["v_floor"]
    residual_scales: Tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if self.q_floor <= 0 or self.v_floor <= 0:
            raise ValueError("Physics floors must be positive")
        if len(self.residual_scales) != 2 or min(self.residual_scales) <= 0:
            raise ValueError(f"Residual scales must be two positive numbers, got {self.residual_scales}")

    @classmethod
    def from_dict(cls, values: dict) -> "PhysicsSettings":
        unknown = set(values) - set(PHYSICS_DEFAULTS)
        if unknown:
            raise ValueError(f"Unknown physics keys: {sorted(unknown)}")
        merged = {**PHYSICS_DEFAULTS, **values}
        return cls(
            constants=PWConstants(tau=float(merged["tau"]), c=float(merged["c"])),
            q_floor=float(merged["q_floor"]),
            v_floor=float(merged["v_floor"]),
            residual_scales=tuple(float(s) for s in merged["residual_scales"]),
        )


@dataclass(frozen=True)
class LossWeights:
    """alpha1 (data), alpha2 (physics), alpha3 (parameter)."""

    data: float = 1.0
    physics: float = 1.0
    parameter: float = 1.0

    def __post_init__(self):
        values = (self.data, self.physics, self.parameter)
        if any(w < 0 for w in values):
            raise ValueError(f"Loss weights must be non-negative, got {values}")
        if not any(w > 0 for w in values):
            raise ValueError("At least one loss weight must be positive")

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> "LossWeights":
        if len(values) != 3:
            raise ValueError(f"Expected 3 loss weights, got {len(values)}")
        return cls(*(float(v) for v in values))


@dataclass
class LossTerms:
    """Scalar loss nodes of one batch."""

    data: G.GraphNode
    physics: G.GraphNode
    parameter: G.GraphNode
    total: G.GraphNode
    clamped: int = 0

    def values(self) -> dict:
        return {
            "data": float(self.data.value),
            "physics": float(self.physics.value),
            "parameter": float(self.parameter.value),
            "total": float(self.total.value),
        }


def segment_of(x: np.ndarray, segments: int) -> np.ndarray:
    """Segment index of normalized positions: min(floor(x * C), C - 1)."""
    return np.minimum(np.floor(np.asarray(x) * segments).astype(int), segments - 1)


def _fd_at(table: G.GraphNode, x: np.ndarray, segments: int, speed_factor: float):
    """Per-point (v_f, rho_c, a) nodes from a (C, 3) table; v_f scaled by speed_factor."""
    rows = G.index_select(table, segment_of(x, segments))
    return (
        G.mul(G.index_select(rows, (slice(None), 0)), speed_factor),
        G.index_select(rows, (slice(None), 1)),
        G.index_select(rows, (slice(None), 2)),
    )


def fixed_fd_table(segments: Sequence[FDParams]) -> G.GraphNode:
    return G.constant([[s.v_f, s.rho_c, s.a] for s in segments])


def _sample_table(model: FieldEstimator, bound, context, param_source) -> Tuple[G.GraphNode, int]:
    if param_source is not None:
        return fixed_fd_table(param_source), len(param_source)
    return model.fd_table(bound, context), model.segments


def _physical_closure(model: FieldEstimator, bound, context):
    """Normalized network outputs mapped to internal (veh/s, length/s) units."""
    stats, units = model.stats, model.units
    q_scale = stats.flow_std * units.flow_factor
    q_shift = stats.flow_mean * units.flow_factor
    v_scale = stats.speed_std * units.speed_factor
    v_shift = stats.speed_mean * units.speed_factor

    def closure(point: G.GraphNode):
        q_n, v_n = model.decode(bound, context, point)
        return G.add(G.mul(q_n, q_scale), q_shift), G.add(G.mul(v_n, v_scale), v_shift)

    return closure


def sample_residuals(
    model: FieldEstimator,
    bound: BoundParams,
    context,
    sample: TrainSample,
    settings: PhysicsSettings,
    param_source: Optional[Sequence[FDParams]] = None,
) -> ResidualPair:
    """PW residuals at a sample's collocation points."""
    table, segments = _sample_table(model, bound, context, param_source)
    fd = _fd_at(table, sample.collocation[:, 0], segments, model.units.speed_factor)
    return pw_residuals(
        _physical_closure(model, bound, context),
        sample.collocation,
        fd,
        settings.constants,
        Geometry(length=model.length, span=sample.span),
        q_floor=settings.q_floor * model.stats.flow_std * model.units.flow_factor,
        v_floor=float(model.units.speed_to_internal(settings.v_floor)),
    )


def _physics_sum(model, bound, contexts, batch, settings, param_source):
    total, count, clamped = None, 0, 0
    s1, s2 = settings.residual_scales
    for context, sample in zip(contexts, batch):
        if sample.collocation.shape[0] == 0:
            continue
        pair = sample_residuals(model, bound, context, sample, settings, param_source)
        term = G.sum_(G.add(G.square(G.mul(pair.f1, 1.0 / s1)), G.square(G.mul(pair.f2, 1.0 / s2))))
        total = term if total is None else G.add(total, term)
        count += sample.collocation.shape[0]
        clamped += pair.clamped
    if total is None:
        return G.constant(0.0), clamped
    return G.mul(total, 1.0 / count), clamped


def _data_sum(model, bound, contexts, batch):
    total, count = None, 0
    stats = model.stats
    for context, sample in zip(contexts, batch):
        if sample.observed.shape[0] == 0:
            continue
        q_n, v_n = model.decode(bound, context, G.constant(sample.observed))
        q_err = G.sub(q_n, stats.scale(sample.observed_flow, "flow"))
        v_err = G.sub(v_n, stats.scale(sample.observed_speed, "speed"))
        term = G.sum_(G.add(G.square(q_err), G.square(v_err)))
        total = term if total is None else G.add(total, term)
        count += sample.observed.shape[0]
    if total is None:
        raise ValueError("No observed points in any sample of the batch")
    return G.mul(total, 1.0 / count)


def _parameter_sum(model, bound, contexts, batch):
    if not model.learns_fd:
        return G.constant(0.0)
    units, stats = model.units, model.stats
    total, count = None, 0
    for context, sample in zip(contexts, batch):
        if sample.observed.shape[0] == 0:
            continue
        if np.any(sample.observed_speed <= 0):
            raise ValueError(f"Observed speed must be positive (sample at t0={sample.t0:g}s)")
        rho = units.flow_to_internal(sample.observed_flow) / units.speed_to_internal(sample.observed_speed)
        rho = np.maximum(rho, 1e-12)
        table = model.fd_table(bound, context)
        fd = _fd_at(table, sample.observed[:, 0], model.segments, 1.0)
        error = G.mul(G.sub(sample.observed_speed, fd_speed(rho, fd)), 1.0 / stats.speed_std)
        term = G.sum_(G.square(error))
        total = term if total is None else G.add(total, term)
        count += sample.observed.shape[0]
    if total is None:
        return G.constant(0.0)
    return G.mul(total, 1.0 / count)


def _encode_all(model, bound, batch):
    return [model.encode(bound, sample.window, sample.span) for sample in batch]


def physics_loss(
    batch: Sequence[TrainSample],
    model: FieldEstimator,
    param_source: Optional[Sequence[FDParams]] = None,
    settings: Optional[PhysicsSettings] = None,
    bound: Optional[BoundParams] = None,
) -> G.GraphNode:
    """
    Mean of (f1/s1)^2 + (f2/s2)^2 over every (sample, collocation point) pair.

    Args:
        batch: Samples; empty collocation sets contribute nothing
        model: Estimator providing outputs and (unless overridden) FD parameters
        param_source: Fixed per-segment FDParams replacing the model's own
        settings: Physics constants and floors
        bound: Bound parameters to build on (fresh binding when omitted)
    """
    bound = bound or model.params.bind()
    settings = settings or PhysicsSettings()
    loss, _ = _physics_sum(model, bound, _encode_all(model, bound, batch), batch, settings, param_source)
    return loss


def data_loss(
    batch: Sequence[TrainSample], model: FieldEstimator, bound: Optional[BoundParams] = None
) -> G.GraphNode:
    """Mean over observed points of (q̂ - q)^2 + (v̂ - v)^2 in normalized units."""
    bound = bound or model.params.bind()
    return _data_sum(model, bound, _encode_all(model, bound, batch), batch)


def parameter_loss(
    batch: Sequence[TrainSample], model: FieldEstimator, bound: Optional[BoundParams] = None
) -> G.GraphNode:
    """Mean over observed points of ((v - F(q/v)) / sigma_v)^2 under the learned FD."""
    bound = bound or model.params.bind()
    return _parameter_sum(model, bound, _encode_all(model, bound, batch), batch)


def total_loss(
    batch: Sequence[TrainSample],
    model: FieldEstimator,
    weights: LossWeights,
    settings: Optional[PhysicsSettings] = None,
    bound: Optional[BoundParams] = None,
    param_source: Optional[Sequence[FDParams]] = None,
) -> LossTerms:
    """
    alpha1·data + alpha2·physics + alpha3·parameter on one graph.

    Returns:
        LossTerms holding every component node; `total` is the training objective
    """
    bound = bound or model.params.bind()
    settings = settings or PhysicsSettings()
    contexts = _encode_all(model, bound, batch)
    data = _data_sum(model, bound, contexts, batch)
    physics, clamped = _physics_sum(model, bound, contexts, batch, settings, param_source)
    parameter = _parameter_sum(model, bound, contexts, batch)
    if clamped:
        logger.warning("Speed floor applied at %d collocation points", clamped)
    total = G.add(
        G.add(G.mul(data, weights.data), G.mul(physics, weights.physics)),
        G.mul(parameter, weights.parameter),
    )
    return LossTerms(data=data, physics=physics, parameter=parameter, total=total, clamped=clamped)
