"""
PW residuals evaluated on graph nodes.

For a state (q, v) with rho = q / v, on normalized coordinates y = (x/L, (t - t0)/T):

    f1 = d(rho)/dt + dq/dx
    f2 = dv/dt + v dv/dx + (c v / q) d(rho)/dx + (v - F(rho)) / tau

Derivatives come from forward-mode tangents seeded on the query coordinate and
are rescaled by 1/L and 1/T, so the residuals stay connected to the network
weights and are in coherent physical units.
"""

from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from autodiff import graph as G
from physics.fundamental_diagram import PWConstants, fd_speed

StateClosure = Callable[[G.GraphNode], Tuple[G.GraphNode, G.GraphNode]]


@dataclass
class ResidualPair:
    """
    Attributes:
        f1: Conservation residual per collocation point, shape (N,)
        f2: Momentum residual per collocation point, shape (N,)
        clamped: Points whose speed was raised to the floor
    """

    f1: G.GraphNode
    f2: G.GraphNode
    clamped: int = 0


@dataclass(frozen=True)
class Geometry:
    """Chain factors from normalized to physical coordinates."""

    length: float
    span: float

    def __post_init__(self):
        if not (self.length > 0 and self.span > 0):
            raise ValueError(f"Geometry needs positive length and span, got {self}")


def _floored_state(closure: StateClosure, q_floor: float, v_floor: float, clamped: list):
    def state(point: G.GraphNode):
        q, v = closure(point)
        q, v = G.reshape(q, (-1,)), G.reshape(v, (-1,))
        clamped.append(int(np.count_nonzero(v.value < v_floor)))
        q, v = G.maximum(q, q_floor), G.maximum(v, v_floor)
        return q, v, G.div(q, v)

    return state


def pw_residuals(
    closure: StateClosure,
    y,
    fd: Tuple[G.ArrayLike, G.ArrayLike, G.ArrayLike],
    constants: PWConstants,
    geometry: Geometry,
    q_floor: float,
    v_floor: float,
) -> ResidualPair:
    """
    Residuals of the PW equations at query coordinates.

    Args:
        closure: Maps a coordinate node (N, 2) to (q, v) nodes in internal units
        y: Normalized coordinates, shape (N, 2)
        fd: (v_f, rho_c, a) at each point, v_f in internal speed units
        constants: tau and c
        geometry: L and window span for the chain rule
        q_floor: Flow floor applied before any division (internal units)
        v_floor: Speed floor (internal units)

    Returns:
        ResidualPair with the count of speed-floored points
    """
    clamped: list = []
    state = _floored_state(closure, q_floor, v_floor, clamped)
    (q, v, rho), (q_x, v_x, rho_x) = G.coordinate_derivative(state, y, (1.0, 0.0))
    _, (_, v_t, rho_t) = G.coordinate_derivative(state, y, (0.0, 1.0))

    inv_l, inv_t = 1.0 / geometry.length, 1.0 / geometry.span
    with G.suspend_tangents():
        f1 = G.add(G.mul(rho_t, inv_t), G.mul(q_x, inv_l))
        convection = G.mul(G.mul(v, v_x), inv_l)
        pressure = G.mul(G.div(G.mul(constants.c, v), q), G.mul(rho_x, inv_l))
        relaxation = G.div(G.sub(v, fd_speed(rho, fd)), constants.tau)
        f2 = G.add(G.add(G.add(G.mul(v_t, inv_t), convection), pressure), relaxation)
    return ResidualPair(f1=f1, f2=f2, clamped=clamped[0])
