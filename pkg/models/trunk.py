import numpy as np

from autodiff import graph as G
from autodiff.params import BoundParams, ParamSet
from models.configs import TrunkConfig
from models.layers import MLP, Dense

EXPANSION_WIDTH = 8


def nonlinear_expand(y: G.ArrayLike) -> G.GraphNode:
    """
    Map coordinates (N, 2) to [cos x, cos t, sin x, sin t, exp x, exp t, x, t], shape (N, 8).
    """
    y = G.as_node(y)
    if y.value.ndim == 1:
        y = G.reshape(y, (1, 2))
    if y.value.ndim != 2 or y.shape[1] != 2:
        raise G.ShapeError(f"Query coordinates must have shape (N, 2), got {y.shape}")
    return G.concat([G.cos(y), G.sin(y), G.exp(y), y], axis=1)


class AttentionTrunk:
    """
    Gated trunk over the nonlinear expansion.

    U, V and H1 are tanh projections of the expansion; each of the L gated
    layers computes Z = tanh(H W + b) and blends H <- (1 - Z) * U + Z * V.
    A final affine layer with tanh yields the K trunk features.
    """

    def __init__(self, params: ParamSet, name: str, config: TrunkConfig, rng: np.random.Generator):
        width = config.width
        self.features = config.features
        self.u = Dense(params, f"{name}.u", EXPANSION_WIDTH, width, rng)
        self.v = Dense(params, f"{name}.v", EXPANSION_WIDTH, width, rng)
        self.h = Dense(params, f"{name}.h", EXPANSION_WIDTH, width, rng)
        self.gates = [Dense(params, f"{name}.z{i}", width, width, rng) for i in range(config.layers)]
        self.out = Dense(params, f"{name}.out", width, config.features, rng)

    def hidden(self, bound: BoundParams, y: G.ArrayLike) -> G.GraphNode:
        z0 = nonlinear_expand(y)
        u = G.tanh(self.u(bound, z0))
        v = G.tanh(self.v(bound, z0))
        h = G.tanh(self.h(bound, z0))
        for gate in self.gates:
            z = G.tanh(gate(bound, h))
            h = G.add(G.mul(G.sub(1.0, z), u), G.mul(z, v))
        return h

    def __call__(self, bound: BoundParams, y: G.ArrayLike) -> G.GraphNode:
        return G.tanh(self.out(bound, self.hidden(bound, y)))


class DenseTrunk:
    """Plain tanh stack on raw (x, t), used by the vanilla variant."""

    def __init__(self, params: ParamSet, name: str, config: TrunkConfig, rng: np.random.Generator):
        self.features = config.features
        widths = [2] + [config.width] * (config.layers + 1) + [config.features]
        self.net = MLP(params, name, widths, rng, final_activation=True)

    def __call__(self, bound: BoundParams, y: G.ArrayLike) -> G.GraphNode:
        y = G.as_node(y)
        if y.value.ndim == 1:
            y = G.reshape(y, (1, 2))
        return self.net(bound, y)


def attention_trunk_forward(trunk, bound: BoundParams, y: G.ArrayLike) -> G.GraphNode:
    """Trunk features t_1..t_K at coordinates y, shape (N, K)."""
    return trunk(bound, y)
