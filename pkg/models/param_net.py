from typing import List

import numpy as np

from autodiff import graph as G
from autodiff.params import BoundParams, ParamSet
from models.branch import CNNBranch, DenseBranch
from models.configs import FD_COMPONENTS, ParamNetConfig
from physics.fundamental_diagram import FDParams


class ParamNet:
    """
    Self-learning fundamental-diagram network.

    A branch-shaped body reads the two-channel (speed, flow) window and emits
    C x 3 raw values; a sigmoid maps each into its configured (min, max) range.
    Segment i applies to normalized positions [i/C, (i+1)/C).
    """

    def __init__(
        self,
        params: ParamSet,
        name: str,
        config: ParamNetConfig,
        height: int,
        width: int,
        rng: np.random.Generator,
        cnn: bool = True,
    ):
        self.config = config
        body = CNNBranch if cnn else DenseBranch
        self.body = body(
            params, name, config.body, height, width, rng, channels=2, outputs=3 * config.segments
        )
        self.low = np.array([[config.ranges[c][0] for c in FD_COMPONENTS]])
        self.span = np.array([[config.ranges[c][1] - config.ranges[c][0] for c in FD_COMPONENTS]])

    def __call__(self, bound: BoundParams, window_v: np.ndarray, window_q: np.ndarray) -> G.GraphNode:
        """(C, 3) node of (v_f, rho_c, a) per segment in dataset units."""
        stack = np.stack([window_v, window_q])[None]
        raw = G.reshape(self.body(bound, stack), (self.config.segments, 3))
        return G.add(G.mul(G.sigmoid(raw), self.span), self.low)


def to_fd_params(table: np.ndarray) -> List[FDParams]:
    return [FDParams(v_f=float(r[0]), rho_c=float(r[1]), a=float(r[2])) for r in np.asarray(table)]
