"""
loader.py - Run configuration: defaults, YAML files and dotted overrides
"""

import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import yaml

from config.defaults import (
    AS_DEFAULTS,
    DATA_DEFAULTS,
    EVALUATION_DEFAULTS,
    MODEL_DEFAULTS,
    PHYSICS_DEFAULTS,
    PINN_DEFAULTS,
    SAMPLING_DEFAULTS,
    SCENARIO_DEFAULTS,
    TRAINING_DEFAULTS,
)

logger = logging.getLogger(__name__)

REFERENCE_CONFIG = Path(__file__).with_name("reference.yaml")
SEED_LIMIT = 2**64

# Top-level sections and the defaults each one starts from
SECTIONS = {
    "scenario": SCENARIO_DEFAULTS,
    "sampling": SAMPLING_DEFAULTS,
    "model": MODEL_DEFAULTS,
    "training": TRAINING_DEFAULTS,
    "physics": PHYSICS_DEFAULTS,
    "evaluation": EVALUATION_DEFAULTS,
    "baselines": {"adaptive_smoothing": {}, "pinn": {}},
    "data": DATA_DEFAULTS,
}


class ConfigError(ValueError):
    """A configuration file or override cannot be applied."""


def _merge(base: dict, update: dict) -> dict:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict) and merged[key]:
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def parse_override(text: str) -> Tuple[Tuple[str, ...], Any]:
    """
    Split `a.b.c=value`; the value is typed with yaml.safe_load.

    Examples:
        "training.lr=0.01"        -> (("training", "lr"), 0.01)
        "model.flags.cnn=false"   -> (("model", "flags", "cnn"), False)
        "evaluation.sweep_counts=[3, 6]" -> (("evaluation", "sweep_counts"), [3, 6])
    """
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"Override must look like key=value, got '{text}'")
    path = tuple(part.strip() for part in key.split("."))
    if any(not part for part in path):
        raise ConfigError(f"Empty component in override key '{key}'")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"Cannot parse override value '{raw}': {exc}") from exc
    return path, value


def apply_override(config: dict, text: str) -> dict:
    path, value = parse_override(text)
    if path[0] not in SECTIONS:
        raise ConfigError(f"Unknown config section '{path[0]}' in override '{text}'")
    node = config
    for part in path[:-1]:
        child = node.get(part)
        if child is None:
            child = node[part] = {}
        if not isinstance(child, dict):
            raise ConfigError(f"'{part}' in override '{text}' is not a section")
        node = child
    node[path[-1]] = value
    return config


def load_config(path: Optional[Union[str, Path]] = None, overrides: Sequence[str] = ()) -> Dict[str, dict]:
    """
    Merge defaults, an optional YAML file and `--set` overrides, in that order.

    Args:
        path: YAML run configuration; sections missing from it keep their defaults
        overrides: Dotted key=value strings

    Returns:
        Dict with every section of SECTIONS
    """
    config = copy.deepcopy(SECTIONS)
    if path is not None:
        path = Path(path)
        try:
            loaded = yaml.safe_load(path.read_text()) or {}
        except OSError as exc:
            raise ConfigError(f"Cannot read config file {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"Invalid YAML in {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path} must contain a mapping of sections")
        unknown = set(loaded) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"Unknown config sections in {path}: {sorted(unknown)}")
        config = _merge(config, loaded)
        logger.debug("Loaded config %s", path)
    for text in overrides:
        config = apply_override(config, text)
    config["baselines"].setdefault("adaptive_smoothing", {})
    config["baselines"].setdefault("pinn", {})
    unknown_baselines = set(config["baselines"]) - {"adaptive_smoothing", "pinn"}
    if unknown_baselines:
        raise ConfigError(f"Unknown baseline sections: {sorted(unknown_baselines)}")
    for name, defaults in (("adaptive_smoothing", AS_DEFAULTS), ("pinn", PINN_DEFAULTS)):
        unknown_keys = set(config["baselines"][name] or {}) - set(defaults)
        if unknown_keys:
            raise ConfigError(f"Unknown {name} keys: {sorted(unknown_keys)}")
    return config


@dataclass(frozen=True)
class RunConfig:
    """
    One CLI invocation.

    Attributes:
        command: Subcommand name
        config_path: YAML file (None uses the shipped reference config)
        out: Output directory
        seed: Global seed overriding model, training and PINN seeds
        overrides: key=value strings applied after the file
    """

    command: str
    out: Path
    config_path: Optional[Path] = None
    seed: Optional[int] = None
    overrides: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.seed is not None and not 0 <= self.seed < SEED_LIMIT:
            raise ConfigError(f"Seed must be an unsigned 64-bit value, got {self.seed}")

    def resolve(self) -> Dict[str, dict]:
        """The merged configuration this run uses."""
        path = self.config_path or REFERENCE_CONFIG
        config = load_config(path, self.overrides)
        if self.seed is not None:
            config["training"]["seed"] = self.seed
            config["model"]["seed"] = self.seed
            config["baselines"]["pinn"] = {**(config["baselines"]["pinn"] or {}), "seed": self.seed}
        return config

    def prepare_out(self) -> Path:
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"Cannot create output directory {self.out}: {exc}") from exc
        return self.out
