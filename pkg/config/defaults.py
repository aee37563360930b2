"""
defaults.py - Default settings for simulation, sampling, models, training and evaluation
"""

# =============================================================================
# UNITS
# =============================================================================

LENGTH_UNITS = ("ft", "m")
SPEED_UNITS = ("ft/s", "km/h")
FLOW_UNITS = ("veh/s", "veh/h")

# =============================================================================
# SCENARIO (the reference synthetic benchmark)
# =============================================================================

SCENARIO_DEFAULTS = {
    "name": "reference",
    "units": {"length": "m", "speed": "km/h", "flow": "veh/h"},
    "length": 2000.0,  # m
    "horizon": 3600.0,  # s
    "dx": 50.0,  # m
    "dt": 5.0,  # s, output lattice step
    "substeps": 5,  # integration steps per output step
    "segments": [
        {"v_f": 100.0, "rho_c": 0.030, "a": 2.0},
        {"v_f": 95.0, "rho_c": 0.032, "a": 2.0},
        {"v_f": 80.0, "rho_c": 0.026, "a": 2.0},
        {"v_f": 100.0, "rho_c": 0.030, "a": 2.0},
    ],
    "jam_density": 0.15,  # veh/m
    "demand": {"base": 900.0, "surges": [{"start": 1200.0, "end": 1800.0, "value": 1800.0}]},
    "boundary_speed": {"base": 90.0, "surges": []},
    "initial_density": 0.012,  # veh/m, scalar or one value per cell
    "initial_speed": None,  # None places the initial state on the FD
    "sensors": {"count": 11, "positions": None, "evaluation": None},
    "noise": {"speed": 1.0, "flow": 30.0},
    "seed": 7,
}

# =============================================================================
# PHYSICS
# =============================================================================

PHYSICS_DEFAULTS = {
    "tau": 18.0,  # s
    "c": 40.0,  # (length unit / s)^2
    "q_floor": 1e-3,  # fraction of the flow normalization scale
    "v_floor": 0.1,  # dataset speed units
    "residual_scales": [1.0, 1.0],
}

# =============================================================================
# SAMPLING
# =============================================================================

SAMPLING_DEFAULTS = {
    "history": 12,  # H sensing rows per window
    "cadence_steps": 1,  # sensing interval in lattice steps
    "window_steps": None,  # None -> history - 1
    "stride": 6,  # lattice rows between anchors
    "collocation": 512,  # P
    "split": [0.7, 0.1, 0.2],
}

# =============================================================================
# MODEL
# =============================================================================

MODEL_DEFAULTS = {
    "features": 32,  # K
    "conv_channels": [8, 16],
    "kernel_size": 3,
    "dense_widths": [64],
    "trunk_width": 64,
    "trunk_layers": 3,  # L
    "param_ranges": {"v_f": [40.0, 140.0], "rho_c": [0.01, 0.06], "a": [0.5, 4.0]},
    "flags": {"cnn": True, "attention": True, "param_net": True},
    "segments": None,  # C; None uses the scenario segment count
    "seed": 0,
}

# Fixed FD used when the parameter network is disabled (vanilla variant and PINN)
FIXED_FD_DEFAULTS = {"v_f": 100.0, "rho_c": 0.030, "a": 2.0}

# =============================================================================
# TRAINING
# =============================================================================

TRAINING_DEFAULTS = {
    "lr": 1e-3,
    "betas": [0.9, 0.999],
    "eps": 1e-8,
    "epochs": 500,
    "batch_size": 8,
    "patience": 30,
    "max_steps": None,
    "resample_collocation": True,
    "loss_weights": [1.0, 1.0, 1.0],  # data, physics, parameter
    "seed": 0,
}

# =============================================================================
# BASELINES
# =============================================================================

AS_DEFAULTS = {
    "sigma": 600.0,  # m
    "tau_factor": 1.1,  # tau_s = tau_factor * cadence
    "c_free": 80.0,  # km/h
    "c_cong": -15.0,  # km/h
    "v_crit": 60.0,  # km/h
    "delta_v": 20.0,  # km/h
}

# Metric counterparts used when the dataset is in feet
AS_DEFAULTS_FT = {"sigma": 200.0}

PINN_DEFAULTS = {
    "width": 64,
    "layers": 6,
    "seed": 0,
}

# =============================================================================
# EVALUATION
# =============================================================================

EVALUATION_DEFAULTS = {
    "bin_width": 5.0,  # percent
    "overflow": 50.0,  # percent, start of the overflow bin
    "sweep_counts": [3, 6, 11],
}

# =============================================================================
# DATA
# =============================================================================

DATA_DEFAULTS = {
    "grid": None,  # Grid CSV to use as ground truth instead of simulating the scenario
    "model": "pw",  # simulator for synthetic ground truth: pw | lwr
}
