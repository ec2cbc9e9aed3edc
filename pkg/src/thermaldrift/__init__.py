"""Thermal-drift sampling of random Gibbs states with Hamiltonian labels."""

from .drift_channel import DriftOutcome, DriftStepSpec, NumericalError, apply_drift, apply_drift_forced, branch_probabilities
from .operator_kit import gibbs_state, modular_hamiltonian, trace_distance
from .pauli import PauliWord
from .sampler import Ensemble, SamplerConfig, ThermalSample, build_grid_ensemble, replay, run, run_batch

__all__ = [
    "DriftOutcome",
    "DriftStepSpec",
    "Ensemble",
    "NumericalError",
    "PauliWord",
    "SamplerConfig",
    "ThermalSample",
    "apply_drift",
    "apply_drift_forced",
    "branch_probabilities",
    "build_grid_ensemble",
    "gibbs_state",
    "modular_hamiltonian",
    "replay",
    "run",
    "run_batch",
    "trace_distance",
]

__version__ = "0.1.0"
