"""Noisy quantum circuit simulator and experiment lab.

Simulates circuits where every qubit suffers single-qubit depolarizing noise
after initialization and after every depth-1 step, and provides the oracle
constructions, coding-theory components, algorithms, and verification
experiments built on that model.
"""

from .errors import CapacityError, InvariantViolation, NisqlabError, UsageError
from .qsim import (
    CNOT,
    CZ,
    DensityMatrix,
    Gate,
    GateLayer,
    H,
    NoiseRate,
    NoisyCircuit,
    OracleCall,
    OutcomeDistribution,
    PureState,
    X,
    Y,
    Z,
    apply_gate_layer,
    circuit_fingerprint,
    circuit_from_json,
    circuit_to_json,
    depolarize_all,
    evolve_statevector,
    exact_output_distribution,
    layer,
    phase,
    sample_outcomes,
    sample_stream,
    sample_trajectory,
)

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "InvariantViolation",
    "NisqlabError",
    "UsageError",
    "CNOT",
    "CZ",
    "DensityMatrix",
    "Gate",
    "GateLayer",
    "H",
    "NoiseRate",
    "NoisyCircuit",
    "OracleCall",
    "OutcomeDistribution",
    "PureState",
    "X",
    "Y",
    "Z",
    "apply_gate_layer",
    "circuit_fingerprint",
    "circuit_from_json",
    "circuit_to_json",
    "depolarize_all",
    "evolve_statevector",
    "exact_output_distribution",
    "layer",
    "phase",
    "sample_outcomes",
    "sample_stream",
    "sample_trajectory",
    "__version__",
]
