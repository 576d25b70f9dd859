"""Measurement protocols on the merged quasi-chain lattice: bases, frames,
outcome tables, the sampling engine and the contraction oracle."""

from .bases import MeasurementBasis, basis_catalog, filter_pair, leg_states, spin_rotation
from .engine import (
    DEFAULT_RETRIES,
    Instruction,
    LatticeExhausted,
    LogicalProgram,
    MeasurementRecord,
    ProgramError,
    ProtocolError,
    ProtocolState,
    RetryBudgetExceeded,
    StepStatus,
    Trajectory,
    decouple,
    entangle,
    enumerate_branches,
    initialize,
    prenormalize,
    readout,
    rotate_x,
    rotate_z,
    run_program,
)
from .frames import PauliFrame, entangling_gate, propagate_through_v, rx, rz
from .oracle import OracleResult, branch_weight, induced_map, oracle_verify, process_fidelity
from .tables import generate_tables, load_tables, verify_tables

__all__ = [
    "MeasurementBasis", "basis_catalog", "filter_pair", "leg_states", "spin_rotation",
    "DEFAULT_RETRIES", "Instruction", "LatticeExhausted", "LogicalProgram", "MeasurementRecord",
    "ProgramError", "ProtocolError", "ProtocolState", "RetryBudgetExceeded", "StepStatus",
    "Trajectory", "decouple", "entangle", "enumerate_branches", "initialize", "prenormalize",
    "readout", "rotate_x", "rotate_z", "run_program",
    "PauliFrame", "entangling_gate", "propagate_through_v", "rx", "rz",
    "OracleResult", "branch_weight", "induced_map", "oracle_verify", "process_fidelity",
    "generate_tables", "load_tables", "verify_tables",
]
