"""
Dense speed/flow fields and the Grid CSV format they are stored in.

A Grid CSV starts with a units header, followed by one matrix block per
variable:

    # units: length=m, speed=km/h, flow=veh/h, dx=50, dt=5
    @speed
    <rows = time ascending, cols = space ascending>
    @flow
    <same shape>
"""

import io
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
import pandas as pd

from data.domain import Lattice, SpaceTimeDomain
from data.units import UnitSystem

logger = logging.getLogger(__name__)

BLOCKS = ("speed", "flow")
_HEADER = re.compile(r"^#\s*units\s*:(?P<body>.*)$")
_REQUIRED_TAGS = ("length", "speed", "flow", "dx", "dt")


class GridFormatError(ValueError):
    """A Grid CSV (or trajectory CSV) does not follow the documented schema."""


@dataclass(frozen=True)
class GroundTruthField:
    """
    Speed and flow over the full lattice of a domain, in dataset units.

    Attributes:
        domain: Lattice geometry and units
        speed: Array of shape (n_times, n_cells)
        flow: Array of shape (n_times, n_cells)
    """

    domain: SpaceTimeDomain
    speed: np.ndarray
    flow: np.ndarray

    def __post_init__(self):
        for name in BLOCKS:
            values = np.asarray(getattr(self, name), dtype=np.float64)
            if values.shape != self.domain.shape:
                raise ValueError(
                    f"{name} grid has shape {values.shape}, domain expects {self.domain.shape}"
                )
            if not np.all(np.isfinite(values)):
                raise ValueError(f"{name} grid contains non-finite values")
            if np.any(values < 0):
                raise ValueError(f"{name} grid contains negative values")
            values.setflags(write=False)
            object.__setattr__(self, name, values)

    @property
    def units(self) -> UnitSystem:
        return self.domain.units

    def density(self) -> np.ndarray:
        """Density in veh per length unit, from q / v in coherent units."""
        q = self.units.flow_to_internal(self.flow)
        v = self.units.speed_to_internal(self.speed)
        return np.divide(q, v, out=np.zeros_like(q), where=v > 0)


@dataclass(frozen=True)
class EstimateField:
    """
    Dense (q̂, v̂) estimates over a lattice, in dataset units.

    Attributes:
        lattice: Physical query positions and instants
        speed: Array of shape lattice.shape
        flow: Array of shape lattice.shape
        units: Units of speed and flow
    """

    lattice: Lattice
    speed: np.ndarray
    flow: np.ndarray
    units: UnitSystem

    def __post_init__(self):
        for name in BLOCKS:
            values = np.asarray(getattr(self, name), dtype=np.float64)
            if values.shape != self.lattice.shape:
                raise ValueError(
                    f"{name} estimate has shape {values.shape}, lattice is {self.lattice.shape}"
                )
            object.__setattr__(self, name, values)


def _format_header(units: UnitSystem, dx: float, dt: float) -> str:
    return f"# units: {units.header_tags()}, dx={dx:.17g}, dt={dt:.17g}\n"


def write_grid(field: GroundTruthField, path: Union[str, Path]) -> Path:
    """
    Write a field as Grid CSV with round-trippable float formatting.

    Args:
        field: The field to store
        path: Destination file

    Returns:
        The path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buffer = io.StringIO()
    buffer.write(_format_header(field.units, field.domain.dx, field.domain.dt))
    for name in BLOCKS:
        buffer.write(f"@{name}\n")
        pd.DataFrame(getattr(field, name)).to_csv(
            buffer, header=False, index=False, float_format="%.17g", lineterminator="\n"
        )
    path.write_text(buffer.getvalue())
    logger.debug("Wrote %s grid %s to %s", field.domain.shape, field.units.header_tags(), path)
    return path


def parse_units_header(line: str) -> Tuple[UnitSystem, Dict[str, float]]:
    """
    Parse `# units: key=value, ...`.

    Returns:
        (unit system, extra numeric tags such as dx and dt)
    """
    match = _HEADER.match(line.strip())
    if match is None:
        raise GridFormatError("missing units: first line must be '# units: ...'")
    tags = {}
    for item in match.group("body").split(","):
        if not item.strip():
            continue
        if "=" not in item:
            raise GridFormatError(f"malformed header entry '{item.strip()}'")
        key, value = (part.strip() for part in item.split("=", 1))
        tags[key] = value
    return _units_from_tags(tags, required=_REQUIRED_TAGS)


def _units_from_tags(tags: Dict[str, str], required) -> Tuple[UnitSystem, Dict[str, float]]:
    missing = [key for key in required if key not in tags]
    if missing:
        raise GridFormatError(f"missing units: {', '.join(missing)}")
    try:
        units = UnitSystem(length=tags["length"], speed=tags["speed"], flow=tags["flow"])
    except ValueError as exc:
        raise GridFormatError(str(exc)) from exc
    numbers = {}
    for key in set(tags) - {"length", "speed", "flow"}:
        try:
            numbers[key] = float(tags[key])
        except ValueError as exc:
            raise GridFormatError(f"header tag {key} is not a number: {tags[key]}") from exc
    return units, numbers


def _token_value(token: str) -> float:
    try:
        return float(token)
    except ValueError:
        return np.nan


def _read_block(name: str, lines: List[Tuple[int, str]]) -> np.ndarray:
    """
    Parse the rows of one block with pandas and validate them cell by cell.

    Args:
        name: Block name, for error messages
        lines: (file line number, text) of every data row in the block

    Returns:
        Float array of shape (rows, columns)
    """
    widths = [text.count(",") + 1 for _, text in lines]
    for row, ((line_no, _), width) in enumerate(zip(lines, widths)):
        if width != widths[0]:
            raise GridFormatError(
                f"@{name} row {row} (line {line_no}): ragged row with {width} values, expected {widths[0]}"
            )
    tokens = pd.read_csv(
        io.StringIO("\n".join(text for _, text in lines)),
        header=None,
        dtype=str,
        keep_default_na=False,
        skip_blank_lines=False,
    ).apply(lambda column: column.str.strip())
    values = tokens.map(_token_value).to_numpy(dtype=np.float64)

    bad = ~np.isfinite(values) | (values < 0)
    if bad.any():
        row, column = np.argwhere(bad)[0]
        token, value = tokens.iat[row, column], values[row, column]
        where = f"@{name} row {row} (line {lines[row][0]})"
        if np.isnan(value) and token.lower() != "nan":
            raise GridFormatError(f"{where}: cannot parse token '{token}'")
        if not np.isfinite(value):
            raise GridFormatError(f"{where}: non-finite token '{token}'")
        raise GridFormatError(f"{where}: negative value {value}")
    return values


def load_grid(path: Union[str, Path]) -> GroundTruthField:
    """
    Read a Grid CSV.

    Args:
        path: File to read

    Returns:
        GroundTruthField whose domain is inferred from the block shape and the
        dx/dt header tags (L = n_cols·dx, T = n_rows·dt)

    Notes:
        - Errors name the block, the row index within the block and the file line
        - Both @speed and @flow blocks are required and must have equal shapes
    """
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise GridFormatError("missing units: file is empty")
    units, numbers = parse_units_header(lines[0])

    blocks: Dict[str, List[Tuple[int, str]]] = {}
    current = None
    for line_no, raw in enumerate(lines[1:], start=2):
        text = raw.strip()
        if not text:
            continue
        if text.startswith("@"):
            current = text[1:].strip()
            if current not in BLOCKS:
                raise GridFormatError(f"line {line_no}: unknown block '@{current}'")
            if current in blocks:
                raise GridFormatError(f"line {line_no}: duplicate block '@{current}'")
            blocks[current] = []
            continue
        if current is None:
            raise GridFormatError(f"line {line_no}: data before any @speed/@flow block")
        blocks[current].append((line_no, text))

    for name in BLOCKS:
        if not blocks.get(name):
            raise GridFormatError(f"missing @{name} block")
    speed = _read_block("speed", blocks["speed"])
    flow = _read_block("flow", blocks["flow"])
    if speed.shape != flow.shape:
        raise GridFormatError(f"@speed shape {speed.shape} differs from @flow shape {flow.shape}")

    n_times, n_cells = speed.shape
    dx, dt = numbers["dx"], numbers["dt"]
    domain = SpaceTimeDomain(length=n_cells * dx, horizon=n_times * dt, dx=dx, dt=dt, units=units)
    return GroundTruthField(domain=domain, speed=speed, flow=flow)
