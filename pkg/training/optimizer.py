from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from autodiff.params import ParamSet


class NonFiniteGradientError(FloatingPointError):
    """A gradient contains NaN or Inf; the offending parameter is named."""

    def __init__(self, name: str, count: int):
        self.name = name
        super().__init__(f"Non-finite gradient for parameter '{name}' ({count} entries)")


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError(f"Learning rate must be non-negative, got {self.lr}")
        if not all(0 < b < 1 for b in self.betas):
            raise ValueError(f"Adam betas must lie in (0, 1), got {self.betas}")
        if self.eps <= 0:
            raise ValueError(f"Adam eps must be positive, got {self.eps}")


@dataclass
class AdamState:
    """First and second moments per parameter plus the step count."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(
    params: ParamSet, grads: Dict[str, np.ndarray], state: AdamState, config: AdamConfig
) -> AdamState:
    """
    One Adam update with bias correction, applied to params in place.

    Args:
        params: Weights to update
        grads: Gradient for every parameter name
        state: Moments and step count, advanced in place
        config: Learning rate, betas and eps

    Returns:
        The advanced state
    """
    missing = [name for name in params if name not in grads]
    if missing:
        raise KeyError(f"Gradients missing for parameters: {missing}")
    for name in params:
        bad = np.count_nonzero(~np.isfinite(grads[name]))
        if bad:
            raise NonFiniteGradientError(name, int(bad))

    beta1, beta2 = config.betas
    state.step += 1
    correction1 = 1.0 - beta1**state.step
    correction2 = 1.0 - beta2**state.step
    for name, value in params.items():
        grad = grads[name]
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1 - beta1) * grad if m is None else beta1 * m + (1 - beta1) * grad
        v = (1 - beta2) * grad * grad if v is None else beta2 * v + (1 - beta2) * grad * grad
        state.m[name], state.v[name] = m, v
        value -= config.lr * (m / correction1) / (np.sqrt(v / correction2) + config.eps)
    return state
