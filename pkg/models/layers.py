from typing import List, Sequence

import numpy as np

from autodiff import graph as G
from autodiff.params import BoundParams, ParamSet


def glorot_uniform(rng: np.random.Generator, shape: Sequence[int], fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=tuple(shape))


class Dense:
    """Affine layer x @ W + b with Glorot-uniform W and zero b."""

    def __init__(self, params: ParamSet, name: str, n_in: int, n_out: int, rng: np.random.Generator):
        self.weight = f"{name}.w"
        self.bias = f"{name}.b"
        self.n_in, self.n_out = n_in, n_out
        params.add(self.weight, glorot_uniform(rng, (n_in, n_out), n_in, n_out))
        params.add(self.bias, np.zeros((1, n_out)))

    def __call__(self, bound: BoundParams, x: G.GraphNode) -> G.GraphNode:
        return G.add(G.matmul(x, bound[self.weight]), bound[self.bias])


class Conv2D:
    """Valid-padding convolution with a per-channel bias."""

    def __init__(
        self,
        params: ParamSet,
        name: str,
        c_in: int,
        c_out: int,
        kernel: Sequence[int],
        rng: np.random.Generator,
    ):
        kh, kw = kernel
        self.kernel = f"{name}.k"
        self.bias = f"{name}.b"
        self.c_out = c_out
        params.add(self.kernel, glorot_uniform(rng, (c_out, c_in, kh, kw), c_in * kh * kw, c_out * kh * kw))
        params.add(self.bias, np.zeros((1, c_out, 1, 1)))

    def __call__(self, bound: BoundParams, x: G.GraphNode) -> G.GraphNode:
        return G.add(G.conv2d(x, bound[self.kernel]), bound[self.bias])


class MLP:
    """
    Stack of Dense layers with tanh between them.

    Args:
        params: ParamSet to register weights in
        name: Prefix of every weight name
        widths: Layer widths including input and output, e.g. [2, 64, 64, 2]
        rng: Initialization generator
        final_activation: Apply tanh after the last layer too
    """

    def __init__(
        self,
        params: ParamSet,
        name: str,
        widths: Sequence[int],
        rng: np.random.Generator,
        final_activation: bool = False,
    ):
        if len(widths) < 2:
            raise ValueError(f"An MLP needs at least input and output widths, got {widths}")
        self.layers: List[Dense] = [
            Dense(params, f"{name}.{i}", n_in, n_out, rng)
            for i, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:]))
        ]
        self.final_activation = final_activation

    @property
    def output(self) -> Dense:
        return self.layers[-1]

    def __call__(self, bound: BoundParams, x: G.GraphNode) -> G.GraphNode:
        for i, layer in enumerate(self.layers):
            x = layer(bound, x)
            if i < len(self.layers) - 1 or self.final_activation:
                x = G.tanh(x)
        return x
