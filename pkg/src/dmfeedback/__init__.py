"""Quantum-trajectory simulation of a two-qubit Heisenberg-DM system under noisy
fields, with PI feedback on the DM strength and B0 metrology."""

__version__ = "0.1.0"

from .config import ScenarioConfig, parse_config
from .control import PiController, gain_grid_search, pi_update
from .entanglement import (
    REFERENCE_FIT,
    CalibrationFit,
    ProxyCalibration,
    estimate_negativity,
    fit_calibration,
    negativity,
    negativity_pure,
    zz_correlation,
)
from .ensemble import EnsembleStats, lindblad_reference, run_ensemble, time_averaged_negativity
from .metrology import (
    closed_loop_qfi,
    qfi_finite_difference,
    scaling_prediction,
    sensitivity,
    steady_state_density,
)
from .model import ExchangeCouplings, FieldSample, build_hamiltonian, initial_state, pauli_op

__all__ = [
    "REFERENCE_FIT",
    "CalibrationFit",
    "EnsembleStats",
    "ExchangeCouplings",
    "FieldSample",
    "PiController",
    "ProxyCalibration",
    "ScenarioConfig",
    "build_hamiltonian",
    "closed_loop_qfi",
    "estimate_negativity",
    "fit_calibration",
    "gain_grid_search",
    "initial_state",
    "lindblad_reference",
    "negativity",
    "negativity_pure",
    "parse_config",
    "pauli_op",
    "pi_update",
    "qfi_finite_difference",
    "run_ensemble",
    "scaling_prediction",
    "sensitivity",
    "steady_state_density",
    "time_averaged_negativity",
    "zz_correlation",
]
