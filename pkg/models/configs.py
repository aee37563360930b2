from dataclasses import asdict, dataclass, field
from typing import Dict, List, Tuple

from config.defaults import FIXED_FD_DEFAULTS, MODEL_DEFAULTS
from physics.fundamental_diagram import SHAPE_RANGE, FDParams

FD_COMPONENTS = ("v_f", "rho_c", "a")


@dataclass(frozen=True)
class BranchConfig:
    """Conv stack (kernel size, channels), dense head widths and output feature count K."""

    features: int = 32
    conv_channels: Tuple[int, ...] = (8, 16)
    kernel_size: int = 3
    dense_widths: Tuple[int, ...] = (64,)

    def __post_init__(self):
        if self.features < 1:
            raise ValueError(f"K must be >= 1, got {self.features}")
        if self.kernel_size < 1 or any(c < 1 for c in self.conv_channels):
            raise ValueError("Kernel size and channel counts must be positive")

    def kernels(self, height: int, width: int) -> List[Tuple[int, int]]:
        """
        Kernel shape of each conv layer for an (height, width) input.

        Kernels shrink to fit narrow inputs so every conv output keeps an extent >= 1.
        """
        shapes = []
        for _ in self.conv_channels:
            kh, kw = min(self.kernel_size, height), min(self.kernel_size, width)
            shapes.append((kh, kw))
            height, width = height - kh + 1, width - kw + 1
        return shapes

    def conv_output(self, height: int, width: int) -> Tuple[int, int]:
        for kh, kw in self.kernels(height, width):
            height, width = height - kh + 1, width - kw + 1
        return height, width


@dataclass(frozen=True)
class TrunkConfig:
    """Hidden width, gated layer count L and output feature count K."""

    features: int = 32
    width: int = 64
    layers: int = 3

    def __post_init__(self):
        if self.layers < 1 or self.width < 1:
            raise ValueError("Trunk needs L >= 1 and a positive width")


@dataclass(frozen=True)
class ParamNetConfig:
    """Branch-shaped body with C x 3 sigmoid-bounded outputs."""

    body: BranchConfig
    segments: int = 4
    ranges: Dict[str, Tuple[float, float]] = field(
        default_factory=lambda: {k: tuple(v) for k, v in MODEL_DEFAULTS["param_ranges"].items()}
    )

    def __post_init__(self):
        if self.segments < 1:
            raise ValueError(f"C must be >= 1, got {self.segments}")
        for name in FD_COMPONENTS:
            low, high = self.ranges[name]
            if not 0 < low < high:
                raise ValueError(f"Range of {name} must be positive and ordered, got {(low, high)}")
        low_a, high_a = self.ranges["a"]
        if low_a < SHAPE_RANGE[0] or high_a > SHAPE_RANGE[1]:
            raise ValueError(f"Range of a must lie within {SHAPE_RANGE}")


@dataclass(frozen=True)
class ModelConfig:
    """
    Everything needed to rebuild an operator model.

    Attributes:
        branch: Branch network shape (also the parameter-net body)
        trunk: Trunk network shape
        param_net: Parameter network shape and output ranges
        history: H rows per window
        sensors: W input sensors
        cnn: CNN branches (else flatten + dense)
        attention: Expansion + gated trunk (else dense trunk on raw (x, t))
        learn_fd: Parameter network (else fixed_fd)
        fixed_fd: Per-segment FDs used when learn_fd is off
        seed: Initialization seed
    """

    branch: BranchConfig
    trunk: TrunkConfig
    param_net: ParamNetConfig
    history: int
    sensors: int
    cnn: bool = True
    attention: bool = True
    learn_fd: bool = True
    fixed_fd: Tuple[FDParams, ...] = (FDParams(**FIXED_FD_DEFAULTS),)
    seed: int = 0

    def __post_init__(self):
        if self.branch.features != self.trunk.features:
            raise ValueError(
                f"Branch K={self.branch.features} differs from trunk K={self.trunk.features}"
            )
        if self.history < 2 or self.sensors < 2:
            raise ValueError("Windows need H >= 2 and W >= 2")

    @property
    def features(self) -> int:
        return self.branch.features

    @property
    def variant(self) -> str:
        if self.cnn and self.attention and self.learn_fd:
            return "extended"
        if not (self.cnn or self.attention or self.learn_fd):
            return "vanilla"
        return "ablation"

    @classmethod
    def from_dict(
        cls, values: dict, history: int, sensors: int, segments: int, fixed_fd=None
    ) -> "ModelConfig":
        """
        Args:
            values: `model` section shaped like MODEL_DEFAULTS
            history: H from the sampling section
            sensors: W, the input sensor count
            segments: C, parameter-net segment count
            fixed_fd: FDParams used when the parameter net is disabled
        """
        unknown = set(values) - set(MODEL_DEFAULTS)
        if unknown:
            raise ValueError(f"Unknown model keys: {sorted(unknown)}")
        merged = {**MODEL_DEFAULTS, **values}
        flags = {**MODEL_DEFAULTS["flags"], **(values.get("flags") or {})}
        unknown_flags = set(flags) - set(MODEL_DEFAULTS["flags"])
        if unknown_flags:
            raise ValueError(f"Unknown model flags: {sorted(unknown_flags)}")
        branch = BranchConfig(
            features=int(merged["features"]),
            conv_channels=tuple(int(c) for c in merged["conv_channels"]),
            kernel_size=int(merged["kernel_size"]),
            dense_widths=tuple(int(w) for w in merged["dense_widths"]),
        )
        trunk = TrunkConfig(
            features=int(merged["features"]),
            width=int(merged["trunk_width"]),
            layers=int(merged["trunk_layers"]),
        )
        ranges = {**MODEL_DEFAULTS["param_ranges"], **(values.get("param_ranges") or {})}
        return cls(
            branch=branch,
            trunk=trunk,
            param_net=ParamNetConfig(
                body=branch,
                segments=segments,
                ranges={k: (float(v[0]), float(v[1])) for k, v in ranges.items()},
            ),
            history=history,
            sensors=sensors,
            cnn=bool(flags["cnn"]),
            attention=bool(flags["attention"]),
            learn_fd=bool(flags["param_net"]),
            fixed_fd=tuple(fixed_fd) if fixed_fd else (FDParams(**FIXED_FD_DEFAULTS),),
            seed=int(merged["seed"]),
        )

    def to_dict(self) -> dict:
        echo = asdict(self)
        echo["fixed_fd"] = [fd.to_dict() for fd in self.fixed_fd]
        return echo

    @classmethod
    def from_echo(cls, echo: dict) -> "ModelConfig":
        """Inverse of to_dict."""
        branch = BranchConfig(
            features=echo["branch"]["features"],
            conv_channels=tuple(echo["branch"]["conv_channels"]),
            kernel_size=echo["branch"]["kernel_size"],
            dense_widths=tuple(echo["branch"]["dense_widths"]),
        )
        param_net = echo["param_net"]
        return cls(
            branch=branch,
            trunk=TrunkConfig(**echo["trunk"]),
            param_net=ParamNetConfig(
                body=branch,
                segments=param_net["segments"],
                ranges={k: tuple(v) for k, v in param_net["ranges"].items()},
            ),
            history=echo["history"],
            sensors=echo["sensors"],
            cnn=echo["cnn"],
            attention=echo["attention"],
            learn_fd=echo["learn_fd"],
            fixed_fd=tuple(FDParams.from_dict(fd) for fd in echo["fixed_fd"]),
            seed=echo["seed"],
        )
