"""Discrete-event simulator of a programmable multiplexed photonic quantum memory."""

from .budget import TABLE_I, EfficiencyBudget, end_to_end_efficiency
from .controller import (
    Instruction,
    Op,
    Trace,
    generate_random_sequence,
    queue_policy,
    run_sequence,
    stack_policy,
    validate_sequence,
    write_probability,
)
from .dlcz import SourceParams, catch_freeze_reshuffle_release, prob_k_pairs_within
from .encoding import ConverterBank, ConverterCalibration, converter_channel
from .memarray import ArrayGeometry, MemoryArray, PhysicsParams, ProtocolViolation
from .metrics import MetricsReport, compute_metrics
from .qstate import Polarization, bell_fidelity, fidelity_to_pure, polarization
from .scenarios import Scenario, run_scenario

__version__ = "0.1.0"

__all__ = [
    "TABLE_I",
    "EfficiencyBudget",
    "end_to_end_efficiency",
    "Instruction",
    "Op",
    "Trace",
    "generate_random_sequence",
    "queue_policy",
    "run_sequence",
    "stack_policy",
    "validate_sequence",
    "write_probability",
    "SourceParams",
    "catch_freeze_reshuffle_release",
    "prob_k_pairs_within",
    "ConverterBank",
    "ConverterCalibration",
    "converter_channel",
    "ArrayGeometry",
    "MemoryArray",
    "PhysicsParams",
    "ProtocolViolation",
    "MetricsReport",
    "compute_metrics",
    "Polarization",
    "bell_fidelity",
    "fidelity_to_pure",
    "polarization",
    "Scenario",
    "run_scenario",
]
