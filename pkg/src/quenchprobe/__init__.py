"""Quench-interferometric probing of quantum phase transitions in ANNNI spin chains."""

from .hamiltonian import Boundary, ModelSpec, apply_hamiltonian, dense_matrix
from .hilbert import (
    Observable,
    SpinBasis,
    StateVector,
    apply_observable,
    expectation_and_variance,
    polarized_state,
    rotate_to_x_basis,
)
from .metrology import (
    MetricCurve,
    OutcomeDistribution,
    encode_phase,
    outcome_distribution,
    qfi_curve,
    qfi_pure,
    time_average,
)
from .propagator import EvolutionGrid, KrylovConfig, evolve_exact, evolve_krylov

__version__ = "0.1.0"

__all__ = [
    "Boundary",
    "EvolutionGrid",
    "KrylovConfig",
    "MetricCurve",
    "ModelSpec",
    "Observable",
    "OutcomeDistribution",
    "SpinBasis",
    "StateVector",
    "apply_hamiltonian",
    "apply_observable",
    "dense_matrix",
    "encode_phase",
    "evolve_exact",
    "evolve_krylov",
    "expectation_and_variance",
    "outcome_distribution",
    "polarized_state",
    "qfi_curve",
    "qfi_pure",
    "rotate_to_x_basis",
    "time_average",
]
