import logging
from pathlib import Path
from typing import Dict, Union

import numpy as np

from data.domain import SpaceTimeDomain
from data.grid import EstimateField, GroundTruthField, write_grid

logger = logging.getLogger(__name__)


def _truth_rows(estimate: EstimateField, truth: GroundTruthField) -> np.ndarray:
    """Lattice rows of the truth covered by the estimate; raises unless the lattices match."""
    domain = truth.domain
    positions = np.asarray(estimate.lattice.positions)
    if positions.shape != (domain.n_cells,) or not np.allclose(positions, domain.cell_centers()):
        raise ValueError("Estimate positions do not match the cell centres of the truth lattice")
    times = np.asarray(estimate.lattice.times)
    rows = np.round(times / domain.dt).astype(int)
    if (
        not np.allclose(rows * domain.dt, times)
        or np.any(np.diff(rows) != 1)
        or rows[0] < 0
        or rows[-1] >= domain.n_times
    ):
        raise ValueError("Estimate instants are not consecutive instants of the truth lattice")
    return rows


def export_heatmap(
    estimate: EstimateField, truth: GroundTruthField, prefix: Union[str, Path]
) -> Dict[str, Path]:
    """
    Write `<prefix>_estimate.csv`, `<prefix>_truth.csv` and `<prefix>_abs_error.csv`.

    Each file is a Grid CSV over the estimate's instants, so it loads back with load_grid.
    """
    rows = _truth_rows(estimate, truth)
    source = truth.domain
    domain = SpaceTimeDomain(
        length=source.length, horizon=len(rows) * source.dt, dx=source.dx, dt=source.dt, units=source.units
    )
    truth_speed, truth_flow = truth.speed[rows], truth.flow[rows]
    fields = {
        "estimate": GroundTruthField(domain, estimate.speed, estimate.flow),
        "truth": GroundTruthField(domain, truth_speed, truth_flow),
        "abs_error": GroundTruthField(
            domain, np.abs(estimate.speed - truth_speed), np.abs(estimate.flow - truth_flow)
        ),
    }
    prefix = Path(prefix)
    paths = {name: write_grid(field, prefix.parent / f"{prefix.name}_{name}.csv") for name, field in fields.items()}
    logger.info("Wrote heatmaps %s_*.csv", prefix)
    return paths
