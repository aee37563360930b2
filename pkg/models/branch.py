import numpy as np

from autodiff import graph as G
from autodiff.params import BoundParams, ParamSet
from models.configs import BranchConfig
from models.layers import MLP, Conv2D


def _as_batch(grid: G.ArrayLike, channels: int) -> G.GraphNode:
    """Accept (H, W), (C, H, W) or (B, C, H, W) and return a 4-D node."""
    node = G.as_node(grid)
    if node.value.ndim == 2 and channels == 1:
        return G.reshape(node, (1, 1) + node.shape)
    if node.value.ndim == 3:
        return G.reshape(node, (1,) + node.shape)
    if node.value.ndim == 4:
        return node
    raise G.ShapeError(f"Branch input with shape {node.shape} does not match {channels} channel(s)")


class CNNBranch:
    """
    Convolutional branch: conv stack with tanh, flatten, dense head with a
    linear final layer of width `outputs` (2K for the operator branches).
    """

    def __init__(
        self,
        params: ParamSet,
        name: str,
        config: BranchConfig,
        height: int,
        width: int,
        rng: np.random.Generator,
        channels: int = 1,
        outputs: int = None,
    ):
        self.height, self.width, self.channels = height, width, channels
        self.outputs = 2 * config.features if outputs is None else outputs
        self.convs = []
        c_in = channels
        for i, (c_out, kernel) in enumerate(zip(config.conv_channels, config.kernels(height, width))):
            self.convs.append(Conv2D(params, f"{name}.conv{i}", c_in, c_out, kernel, rng))
            c_in = c_out
        out_h, out_w = config.conv_output(height, width)
        flat = c_in * out_h * out_w
        self.head = MLP(params, f"{name}.head", [flat, *config.dense_widths, self.outputs], rng)

    @property
    def conv_count(self) -> int:
        return len(self.convs)

    def __call__(self, bound: BoundParams, grid: G.ArrayLike) -> G.GraphNode:
        x = _as_batch(grid, self.channels)
        if x.shape[1:] != (self.channels, self.height, self.width):
            raise G.ShapeError(
                f"Branch expects ({self.channels}, {self.height}, {self.width}), got {x.shape[1:]}"
            )
        for conv in self.convs:
            x = G.tanh(conv(bound, x))
        return self.head(bound, G.flatten(x))


class DenseBranch:
    """Flatten + dense branch used by the vanilla variant."""

    def __init__(
        self,
        params: ParamSet,
        name: str,
        config: BranchConfig,
        height: int,
        width: int,
        rng: np.random.Generator,
        channels: int = 1,
        outputs: int = None,
    ):
        self.height, self.width, self.channels = height, width, channels
        self.outputs = 2 * config.features if outputs is None else outputs
        self.head = MLP(
            params, f"{name}.head", [channels * height * width, *config.dense_widths, self.outputs], rng
        )

    conv_count = 0

    def __call__(self, bound: BoundParams, grid: G.ArrayLike) -> G.GraphNode:
        x = _as_batch(grid, self.channels)
        if x.shape[1:] != (self.channels, self.height, self.width):
            raise G.ShapeError(
                f"Branch expects ({self.channels}, {self.height}, {self.width}), got {x.shape[1:]}"
            )
        return self.head(bound, G.flatten(x))


def cbn_forward(branch: CNNBranch, bound: BoundParams, grid: np.ndarray) -> G.GraphNode:
    """Feature vector of length 2K for one normalized (H, W) grid."""
    return G.reshape(branch(bound, grid), (branch.outputs,))
