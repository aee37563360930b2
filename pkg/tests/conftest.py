import copy

import pytest
import yaml

from commands.common import load_dataset
from config.loader import load_config

# 400 m stretch, 8 cells, 120 lattice rows, 4 input + 4 evaluation sensors
TINY_SECTIONS = {
    "scenario": {
        "name": "tiny",
        "length": 400.0,
        "horizon": 600.0,
        "dx": 50.0,
        "dt": 5.0,
        "substeps": 5,
        "segments": [
            {"v_f": 100.0, "rho_c": 0.030, "a": 2.0},
            {"v_f": 80.0, "rho_c": 0.026, "a": 2.0},
        ],
        "demand": {"base": 900.0, "surges": [{"start": 200.0, "end": 350.0, "value": 1500.0}]},
        "boundary_speed": {"base": 90.0, "surges": []},
        "sensors": {"count": 4},
        "noise": {"speed": 0.5, "flow": 10.0},
        "seed": 3,
    },
    "sampling": {"history": 4, "stride": 6, "collocation": 8, "split": [0.7, 0.1, 0.2]},
    "model": {
        "features": 4,
        "conv_channels": [2],
        "kernel_size": 3,
        "dense_widths": [8],
        "trunk_width": 8,
        "trunk_layers": 1,
        "seed": 0,
    },
    "training": {"lr": 0.001, "epochs": 1, "batch_size": 4, "patience": 5, "max_steps": 2, "seed": 0},
    "physics": {"residual_scales": [0.0002, 1.0]},
    "baselines": {"adaptive_smoothing": {}, "pinn": {"width": 8, "layers": 2}},
}


@pytest.fixture
def tiny_config():
    config = load_config()
    config.update(copy.deepcopy(TINY_SECTIONS))
    return config


@pytest.fixture
def tiny_dataset(tiny_config):
    return load_dataset(tiny_config)


@pytest.fixture
def tiny_yaml(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(TINY_SECTIONS, sort_keys=True))
    return path
