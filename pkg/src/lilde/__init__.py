"""Differential Evolution with limited individual lifetime."""

from .engine import (
    UNLIMITED,
    Decision,
    GenerationStats,
    Individual,
    OptimizationTrace,
    Optimizer,
    OptimizerConfig,
    ParameterSpace,
    Population,
    Termination,
    check_termination,
    run,
)
from .errors import (
    BudgetExhausted,
    ConfigurationError,
    DomainError,
    EncodingError,
    EvaluationError,
    EvaluationTimeout,
    ProtocolError,
)
from .objectives import (
    AckleyMax,
    SimulatedExperiment,
    ackley_max,
    simulated_experiment,
    with_drift,
    with_noise,
    with_resampling,
)

__all__ = [
    "UNLIMITED", "Decision", "GenerationStats", "Individual", "OptimizationTrace", "Optimizer",
    "OptimizerConfig", "ParameterSpace", "Population", "Termination", "check_termination", "run",
    "BudgetExhausted", "ConfigurationError", "DomainError", "EncodingError", "EvaluationError",
    "EvaluationTimeout", "ProtocolError", "AckleyMax", "SimulatedExperiment", "ackley_max",
    "simulated_experiment", "with_drift", "with_noise", "with_resampling",
]
