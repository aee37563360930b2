from dataclasses import replace
from typing import Iterable

from data.units import UnitSystem
from models.configs import ModelConfig
from models.operator import OperatorModel

# Each flag switches one extension off
FLAG_FIELDS = {"no_cnn": "cnn", "no_attention": "attention", "no_paramnet": "learn_fd"}
VANILLA_FLAGS = tuple(FLAG_FIELDS)


def variant_config(config: ModelConfig, flags: Iterable[str]) -> ModelConfig:
    """
    The operator config with the named extensions disabled.

    An empty flag set returns the extended config unchanged.
    """
    flags = set(flags)
    unknown = flags - set(FLAG_FIELDS)
    if unknown:
        raise ValueError(f"Unknown variant flags: {sorted(unknown)}; expected a subset of {VANILLA_FLAGS}")
    return replace(config, **{FLAG_FIELDS[flag]: False for flag in flags})


def vanilla_pideeponet(
    config: ModelConfig,
    units: UnitSystem,
    length: float,
    span: float,
    flags: Iterable[str] = VANILLA_FLAGS,
) -> OperatorModel:
    """Dense branches, plain trunk on raw (x, t) and fixed FDs unless fewer flags are given."""
    return OperatorModel(variant_config(config, flags), units, length, span)
