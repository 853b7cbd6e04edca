"""Executable safe control envelope for cooperative adaptive cruise control
under communication delay and packet loss."""
from .envelope import (
    AccelSet,
    Params,
    WorldState,
    admissible_accel_set,
    check_controllability,
    check_initial,
    check_loop_invariant,
    check_params,
    safe_delay,
    safe_drop,
)
from .errors import (
    AdversaryContractError,
    ConfigError,
    DomainError,
    EnvelopeViolation,
    ScenarioError,
    TraceError,
)
from .executor import ControlMode, SimConfig, Simulation, Trace, run_cycle, run_scenario, simulate
from .kinematics import evolve_const_accel, min_gap_on_segment, stopping_distance
from .monitor import check_cycle_invariants, check_diff_invariants, check_trace_safety
from .network import Channel, NetworkTiming, apply_outcome, sample_channel, validate_timing
from .oracle import boundary_scan, falsify, worst_case_min_gap
from .scenario import Scenario, load_scenario

__version__ = "0.1.0"

__all__ = [
    "AccelSet", "Params", "WorldState", "admissible_accel_set", "check_controllability",
    "check_initial", "check_loop_invariant", "check_params", "safe_delay", "safe_drop",
    "AdversaryContractError", "ConfigError", "DomainError", "EnvelopeViolation",
    "ScenarioError", "TraceError",
    "ControlMode", "SimConfig", "Simulation", "Trace", "run_cycle", "run_scenario", "simulate",
    "evolve_const_accel", "min_gap_on_segment", "stopping_distance",
    "check_cycle_invariants", "check_diff_invariants", "check_trace_safety",
    "Channel", "NetworkTiming", "apply_outcome", "sample_channel", "validate_timing",
    "boundary_scan", "falsify", "worst_case_min_gap",
    "Scenario", "load_scenario",
]
