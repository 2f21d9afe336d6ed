#!/bin/env python
"""
This module contains configuration defaults, numerical tolerances and the
reference flight-control data used throughout cbfaw.
"""

import math
from pathlib import Path
from typing import Any, Dict, Tuple

# Type aliases for scenario-file data
ConfigValue = Any
Matrix = Tuple[Tuple[float, ...], ...]
Vector = Tuple[float, ...]

VERSION = "0.1.0"

# Bundled scenario fixtures ship inside the package
SCENARIO_DIR = Path(__file__).parent / "scenarios"
SCENARIO_SUFFIX = ".cfg"
SCENARIO_NAMES = (
    "fig2_unlimited",
    "fig3_limited_no_aw",
    "fig4_limited_aw",
    "fig6_disturbance",
)

# Exit codes of the command-line front end
EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_VERIFICATION = 3

# Numerical tolerances
SINGULAR_RTOL = 1e-10
HURWITZ_MARGIN = -1e-12
SYMMETRY_TOL = 1e-12
RICCATI_RTOL = 1e-8
KKT_TOL = 1e-9
SPECTRUM_TOL = 1e-9
CBF_DECAY_TOL = 1e-6
LINEAR_FIDELITY_TOL = 1e-6
EIG_MAX_ITER_PER_DIM = 100
NEWTON_MAX_ITER = 50
ROW_COUNT_SLACK = 1e-9
SATURATION_BOUNDARY_TOL = 1e-12

# Reference short-period model of a tactical aircraft (alpha, q), elevator input
REFERENCE_A_P = ((-2.241, 0.9897), (-4.474, -0.9024))
REFERENCE_B_P = ((-0.23307,), (-4.5926,))
REFERENCE_C_P_REG = ((1.0, 0.0),)
REFERENCE_D_P_REG = ((0.0,),)
REFERENCE_Q_DIAG = (20.0, 0.0, 0.2)
REFERENCE_R = ((1.0,),)
REFERENCE_GAINS = (-4.4721, -1.0369, -0.58504)
REFERENCE_ALPHA_CBF = 4.4721
REFERENCE_LIMIT = 10.0 * math.pi / 180.0
REFERENCE_DOUBLET_AMPLITUDE = 10.0 * math.pi / 180.0
REFERENCE_DISTURBANCE_AMPLITUDE = 4.0 * math.pi / 180.0
REFERENCE_DISTURBANCE_FREQUENCY = 2.0
REFERENCE_ACTUATOR_FREQUENCY = 70.0
REFERENCE_ACTUATOR_DAMPING = 0.7

# Frequency grid defaults (rad/s)
GRID_POINTS = 400
GRID_MIN = 1e-2
GRID_MAX = 1e3
GRID_BOUNDS = (1e-3, 1e4)

# Signal kinds understood by the simulator
SIGNAL_KINDS = ("doublet", "step", "sinusoid", "zero")
PIECEWISE_CONSTANT_KINDS = ("doublet", "step", "zero")

# Scenario-file keys that must be present (first missing one is reported)
REQUIRED_KEYS = (
    "plant.A_p",
    "plant.B_p",
    "plant.C_p_reg",
    "plant.D_p_reg",
    "limits.u_min",
    "limits.u_max",
    "aw.alpha_cbf",
)

EXPLICIT_GAIN_KEYS = ("gains.K_I", "gains.K_P")
LQR_WEIGHT_KEYS = ("gains.Q_diag", "gains.R")

# Keys whose defaults depend on the plant dimensions are filled in load.py
DEFAULT_CONFIG: Dict[str, ConfigValue] = {
    "scenario.name": None,
    "limits.enabled": True,
    "aw.enabled": True,
    "sim.dt": 1e-3,
    "sim.duration": 15.0,
    "sim.initial_state": None,
    "sim.disturbance_column": None,
    "sim.command.kind": "doublet",
    "sim.command.amplitude": REFERENCE_DOUBLET_AMPLITUDE,
    "sim.command.t_start": 1.0,
    "sim.command.t_half": 6.0,
    "sim.command.t_end": 11.0,
    "sim.command.frequency": 0.0,
    "sim.disturbance.kind": "zero",
    "sim.disturbance.amplitude": 0.0,
    "sim.disturbance.t_start": 0.0,
    "sim.disturbance.t_half": 0.0,
    "sim.disturbance.t_end": 0.0,
    "sim.disturbance.frequency": 0.0,
    "sim.actuator.enabled": False,
    "sim.actuator.natural_frequency": REFERENCE_ACTUATOR_FREQUENCY,
    "sim.actuator.damping_ratio": REFERENCE_ACTUATOR_DAMPING,
    "output.directory": ".",
    "output.columns": None,
}

# Every key a scenario file may contain
KNOWN_KEYS = (
    REQUIRED_KEYS
    + EXPLICIT_GAIN_KEYS
    + LQR_WEIGHT_KEYS
    + tuple(DEFAULT_CONFIG.keys())
)

# Keys that accept a "_deg" spelling
ANGLE_KEYS = (
    "limits.u_min",
    "limits.u_max",
    "sim.command.amplitude",
    "sim.disturbance.amplitude",
)

# Output files
TRACE_FILE = "trace.csv"
SUMMARY_FILE = "summary"
SPECTRUM_FILE = "spectrum.csv"
FREQUENCY_FILE = "frequency_response.csv"
MARGINS_FILE = "margins.txt"
STEP_FILE = "step_response.csv"
SWEEP_FILE = "sweep.csv"
CSV_PRECISION = 17
