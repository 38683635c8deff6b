"""Behavioral transient simulator of a GaN push-pull gate-drive chain.

Digital isolator -> complementary Si totem-pole -> GaN push-pull -> SiC
MOSFET hard-switching load, with periodic-steady-state analysis, waveform
and power metrics, and config-driven presets.
"""

from .config import Scenario, build_scenario, load_scenario
from .errors import (BadParamPath, EmptyData, GatewaveError, GridMismatch, IncompleteCycle,
                     NewtonDivergence, NoSteadyState, OverlapError, ParseError,
                     SingularCapacitance, StepUnderflow, UnknownPreset, ValidationError)
from .harness import emit_plot, list_presets, load_preset, run_preset, sweep
from .metrics import compare_traces, power_stats, waveform_stats
from .signal import PwmSpec, dead_time, edge_schedule, eval_control
from .solver import SolverOptions, Trace, integrate, newton_solve, run_to_pss

__version__ = "0.1.0"

__all__ = [
    "BadParamPath", "EmptyData", "GatewaveError", "GridMismatch", "IncompleteCycle",
    "NewtonDivergence", "NoSteadyState", "OverlapError", "ParseError", "PwmSpec", "Scenario",
    "SingularCapacitance", "SolverOptions", "StepUnderflow", "Trace", "UnknownPreset",
    "ValidationError", "build_scenario", "compare_traces", "dead_time", "edge_schedule",
    "emit_plot", "eval_control", "integrate", "list_presets", "load_preset", "load_scenario",
    "newton_solve", "power_stats", "run_preset", "run_to_pss", "sweep", "waveform_stats",
]
