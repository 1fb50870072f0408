"""Markov-modulated JSQ: heavy-traffic predictions, simulation, exact oracles."""

from .chain import (
    ModulatingChain,
    PoissonSolution,
    StationaryDistribution,
    solve_poisson,
    stationary_distribution,
    validate_generator,
)
from .model import (
    DerivedRates,
    HtPrediction,
    MmJsqModel,
    SscConditionWarning,
    SscReport,
    check_ssc,
    derived_rates,
    heavy_traffic_prediction,
    limit_laplace,
    scale_to_load,
)
from .oracle import (
    CovarianceCheck,
    ExactStationary,
    ExactStatistics,
    TruncatedChain,
    exact_stationary,
    exact_statistics,
    mm1_geometric,
    mm1_scaled_laplace,
    poisson_covariance_check,
    truncated_chain,
)
from .sim import (
    AggregateStats,
    MeanCI,
    RunStats,
    SimConfig,
    replicate,
    simulate,
)
from .experiments import (
    ConvergenceFit,
    NoisyFitWarning,
    SweepResult,
    SweepRow,
    SweepSpec,
    convergence_order,
    log_pmf_slope,
    run_sweep,
    scale_modulation,
)
from .modelfile import ParsedModel, bundled_model_path, load_bundled, load_model_file
from . import errors

__version__ = "0.1.0"

__all__ = [
    "ModulatingChain",
    "PoissonSolution",
    "StationaryDistribution",
    "validate_generator",
    "stationary_distribution",
    "solve_poisson",
    "MmJsqModel",
    "DerivedRates",
    "SscReport",
    "HtPrediction",
    "SscConditionWarning",
    "derived_rates",
    "scale_to_load",
    "check_ssc",
    "heavy_traffic_prediction",
    "limit_laplace",
    "SimConfig",
    "RunStats",
    "MeanCI",
    "AggregateStats",
    "simulate",
    "replicate",
    "TruncatedChain",
    "ExactStationary",
    "ExactStatistics",
    "CovarianceCheck",
    "truncated_chain",
    "exact_stationary",
    "exact_statistics",
    "poisson_covariance_check",
    "mm1_geometric",
    "mm1_scaled_laplace",
    "SweepSpec",
    "SweepRow",
    "SweepResult",
    "ConvergenceFit",
    "NoisyFitWarning",
    "run_sweep",
    "scale_modulation",
    "convergence_order",
    "log_pmf_slope",
    "ParsedModel",
    "load_model_file",
    "load_bundled",
    "bundled_model_path",
    "errors",
]
