"""Choo-Siow marriage-matching inverse problem: solver and comparative statics."""

__version__ = "0.1.0"

from .core import (
    AmplitudeVector,
    GainsMatrix,
    MaritalDistribution,
    PopulationVector,
    ScalingError,
    ValidatedMarket,
    marriage_distribution,
    objective_E,
    objective_H,
    residual,
    validate_market,
)
from .solver import (
    ConvergenceError,
    Equilibrium,
    IndexMap,
    SolverOptions,
    initial_guess,
    reduce_unpopulated,
    solve,
)
from .statics import (
    FiniteDifferenceReport,
    StaticsReport,
    TransferReport,
    conjecture_probe,
    finite_difference_check,
    gains_sensitivity,
    marriage_elasticity,
    participation_analysis,
    spectral_diagnostic,
    statics_matrix,
    transfer_analysis,
    verify_sign_pattern,
)
from .choice import (
    ChoiceModel,
    SimulationResult,
    choice_probabilities,
    equilibrium_consistency,
    gumbel_sample,
    sigma_limit,
    simulate_choices,
)

__all__ = [
    "AmplitudeVector",
    "ChoiceModel",
    "ConvergenceError",
    "Equilibrium",
    "FiniteDifferenceReport",
    "GainsMatrix",
    "IndexMap",
    "MaritalDistribution",
    "PopulationVector",
    "ScalingError",
    "SimulationResult",
    "SolverOptions",
    "StaticsReport",
    "TransferReport",
    "ValidatedMarket",
    "choice_probabilities",
    "conjecture_probe",
    "equilibrium_consistency",
    "finite_difference_check",
    "gains_sensitivity",
    "gumbel_sample",
    "initial_guess",
    "marriage_distribution",
    "marriage_elasticity",
    "objective_E",
    "objective_H",
    "participation_analysis",
    "reduce_unpopulated",
    "residual",
    "sigma_limit",
    "simulate_choices",
    "solve",
    "spectral_diagnostic",
    "statics_matrix",
    "transfer_analysis",
    "validate_market",
    "verify_sign_pattern",
]
