"""
Evaluation report and its JSON schema:

    {
      "metadata": {"method": ..., "sensors": W, "seed": ..., "scenario": ..., "points": N, ...},
      "metrics": {"speed": {"rmse": ..., "re": ...}, "flow": {...}},
      "per_sensor": [{"position": x, "speed_rmse": ..., "speed_re": ..., "flow_rmse": ..., "flow_re": ...}],
      "histograms": {"speed": [{"low": 0, "high": 5, "count": n}, ..., {"low": 50, "high": null, ...}],
                     "flow": [...]}
    }

Keys are sorted and floats written with repr precision, so equal inputs give
byte-identical files.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Union

import numpy as np
import pandas as pd

from config.defaults import EVALUATION_DEFAULTS
from evaluation.metrics import pointwise_re, re, rmse

VARIABLES = ("speed", "flow")


def error_histogram(
    estimates,
    truths,
    bin_width: float = EVALUATION_DEFAULTS["bin_width"],
    overflow: float = EVALUATION_DEFAULTS["overflow"],
) -> pd.DataFrame:
    """
    Counts of per-point relative errors in [k w, (k+1) w) bins plus one
    overflow bin [overflow, inf); the counts sum to the number of points.
    """
    if bin_width <= 0 or overflow <= 0:
        raise ValueError("Histogram bin width and overflow start must be positive")
    n_bins = int(math.ceil(overflow / bin_width))
    errors = pointwise_re(estimates, truths)
    index = np.where(errors >= overflow, n_bins, np.floor(errors / bin_width)).astype(int)
    counts = np.bincount(index, minlength=n_bins + 1)
    lows = np.arange(n_bins + 1) * bin_width
    highs = np.append(np.minimum(lows[1:], overflow), np.inf)
    lows[-1] = overflow
    return pd.DataFrame({"low": lows, "high": highs, "count": counts})


def _safe_re(estimates, truths) -> float:
    if not np.any(np.asarray(truths)):
        return float("nan")
    return re(estimates, truths)


def _json_float(value: float):
    return None if not np.isfinite(value) else float(value)


@dataclass
class EvalReport:
    """
    Attributes:
        metrics: variable -> {"rmse", "re"} pooled over every evaluated point
        per_sensor: One row per evaluation sensor with RMSE/RE of both variables
        histograms: variable -> relative-error histogram frame
        metadata: Method, sensor count, seed, scenario and point count
    """

    metrics: Dict[str, Dict[str, float]]
    per_sensor: pd.DataFrame
    histograms: Dict[str, pd.DataFrame]
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_arrays(
        cls,
        estimates: Dict[str, np.ndarray],
        truths: Dict[str, np.ndarray],
        positions,
        metadata: dict,
        bin_width: float = EVALUATION_DEFAULTS["bin_width"],
        overflow: float = EVALUATION_DEFAULTS["overflow"],
    ) -> "EvalReport":
        """
        Args:
            estimates: variable -> array (..., n_sensors), last axis per evaluation sensor
            truths: Same layout as estimates
            positions: Evaluation sensor positions
            metadata: Run description copied into the report
        """
        metrics, columns = {}, {"position": [float(p) for p in positions]}
        for name in VARIABLES:
            est, truth = np.asarray(estimates[name]), np.asarray(truths[name])
            if est.shape != truth.shape or est.shape[-1] != len(positions):
                raise ValueError(f"{name}: estimates {est.shape} and truths {truth.shape} do not line up")
            metrics[name] = {"rmse": rmse(est, truth), "re": re(est, truth)}
            flat_est = est.reshape(-1, est.shape[-1])
            flat_truth = truth.reshape(-1, truth.shape[-1])
            columns[f"{name}_rmse"] = [rmse(flat_est[:, j], flat_truth[:, j]) for j in range(len(positions))]
            columns[f"{name}_re"] = [_safe_re(flat_est[:, j], flat_truth[:, j]) for j in range(len(positions))]
        histograms = {
            name: error_histogram(estimates[name], truths[name], bin_width, overflow) for name in VARIABLES
        }
        metadata = {**metadata, "points": int(np.asarray(truths["speed"]).size)}
        return cls(metrics=metrics, per_sensor=pd.DataFrame(columns), histograms=histograms, metadata=metadata)

    def to_dict(self) -> dict:
        per_sensor = [
            {key: _json_float(value) for key, value in row.items()}
            for row in self.per_sensor.to_dict(orient="records")
        ]
        histograms = {
            name: [
                {"low": float(low), "high": _json_float(high), "count": int(count)}
                for low, high, count in zip(frame["low"], frame["high"], frame["count"])
            ]
            for name, frame in self.histograms.items()
        }
        return {
            "metadata": self.metadata,
            "metrics": self.metrics,
            "per_sensor": per_sensor,
            "histograms": histograms,
        }

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    def summary(self) -> str:
        speed, flow = self.metrics["speed"], self.metrics["flow"]
        return (
            f"{self.metadata.get('method', '?')} (W={self.metadata.get('sensors', '?')}): "
            f"speed RMSE {speed['rmse']:.3f} RE {speed['re']:.2f}%, "
            f"flow RMSE {flow['rmse']:.3f} RE {flow['re']:.2f}%"
        )
