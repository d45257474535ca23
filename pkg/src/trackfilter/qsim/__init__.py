"""Gate IR and statevector simulation with optional Pauli noise."""

from .circuit import Circuit, Gate, RegisterLayout, cnot, h, mcrx, mcx, phase, rx, rz, x
from .noise import NoiseParams, noisy_distribution, readout_channel, run_noisy
from .statevector import (
    Counts,
    EmptyBranchError,
    StateVector,
    dense_unitary,
    project,
    run_exact,
    sample_counts,
)

__all__ = [
    "Circuit",
    "Counts",
    "EmptyBranchError",
    "Gate",
    "NoiseParams",
    "RegisterLayout",
    "StateVector",
    "cnot",
    "dense_unitary",
    "h",
    "mcrx",
    "mcx",
    "noisy_distribution",
    "phase",
    "project",
    "readout_channel",
    "run_exact",
    "run_noisy",
    "rx",
    "rz",
    "sample_counts",
    "x",
]
