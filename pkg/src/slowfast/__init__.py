"""Slow-fast stochastic simulation of power systems driven by wind.

The package splits a grid model into slow continuous states (load
recovery), fast continuous states (device dynamics plus
Ornstein-Uhlenbeck wind drivers), algebraic network variables, and
discrete device states (tap changers).  On top of the integrator it
provides slow-manifold analysis, concentration tubes for the stochastic
fluctuations, Monte Carlo ensembles, and scaling diagnostics, all behind
JSON scenario files and a small CLI.
"""

__version__ = "0.1.0"

from .errors import (
    ConvergenceError,
    DegenerateFitError,
    DegenerateNormalizationError,
    DomainError,
    EnsembleError,
    EstimationError,
    NumericalError,
    ParameterError,
    SingularityError,
    SlowFastError,
    ValidationError,
)
from .wind import (
    OuParams,
    WeibullParams,
    WindSeries,
    WindSourceSpec,
    estimate_autocorrelation,
    estimate_moments,
    fit_decay_rate,
    generate_wind_series,
    memoryless_transform,
    target_distribution,
)
from .model import (
    LtcDevice,
    ModelDims,
    RecoveryLoad,
    SlowFastState,
    SystemModel,
    WindInjection,
    ltc_step,
    wind_power_injection,
)
from .fixtures import (
    FIXTURE_NAMES,
    bus_model,
    fixture_scenario,
    linear_slowfast_model,
    model_from_scenario,
    ou_only_model,
)
from .solver import (
    RngStream,
    SolverConfig,
    Trajectory,
    find_consistent_init,
    simulate,
    step_deterministic,
    step_stochastic,
)
from .manifold import (
    SlowManifoldPoint,
    StabilityReport,
    TheoremBoundParams,
    Tube,
    build_tube,
    fit_bound_constant,
    in_tube,
    invariant_manifold_correction,
    manifold_distance_along,
    solve_cross_section,
    solve_lyapunov,
    solve_slow_manifold,
    theorem_bound,
    tube_distance,
    verify_uniform_stability,
)
from .ensemble import (
    EnsembleConfig,
    EnsembleStats,
    ScalingResult,
    deviation_statistics,
    exit_statistics,
    run_ensemble,
    scaling_study,
    speedup_report,
)
from .scenario import (
    Scenario,
    load_scenario,
    run_scenario,
    save_scenario,
    validate_scenario,
)
from .output import (
    RunArtifact,
    emit_plot_data,
    load_stats,
    load_trajectory,
    load_wind_series,
    save_stats,
    save_trajectory,
    save_wind_series,
    scenario_hash,
)

__all__ = [
    "__version__",
    # errors
    "SlowFastError",
    "ParameterError",
    "DomainError",
    "DegenerateNormalizationError",
    "ValidationError",
    "NumericalError",
    "ConvergenceError",
    "SingularityError",
    "EstimationError",
    "DegenerateFitError",
    "EnsembleError",
    # wind
    "OuParams",
    "WeibullParams",
    "WindSourceSpec",
    "WindSeries",
    "target_distribution",
    "memoryless_transform",
    "generate_wind_series",
    "estimate_moments",
    "estimate_autocorrelation",
    "fit_decay_rate",
    # model
    "ModelDims",
    "SlowFastState",
    "SystemModel",
    "RecoveryLoad",
    "LtcDevice",
    "ltc_step",
    "WindInjection",
    "wind_power_injection",
    # fixtures
    "FIXTURE_NAMES",
    "fixture_scenario",
    "linear_slowfast_model",
    "ou_only_model",
    "bus_model",
    "model_from_scenario",
    # solver
    "RngStream",
    "SolverConfig",
    "Trajectory",
    "simulate",
    "step_deterministic",
    "step_stochastic",
    "find_consistent_init",
    # manifold
    "SlowManifoldPoint",
    "StabilityReport",
    "solve_slow_manifold",
    "verify_uniform_stability",
    "invariant_manifold_correction",
    "solve_cross_section",
    "solve_lyapunov",
    "Tube",
    "build_tube",
    "tube_distance",
    "in_tube",
    "TheoremBoundParams",
    "theorem_bound",
    "fit_bound_constant",
    "manifold_distance_along",
    # ensemble
    "EnsembleConfig",
    "EnsembleStats",
    "ScalingResult",
    "run_ensemble",
    "deviation_statistics",
    "exit_statistics",
    "scaling_study",
    "speedup_report",
    # scenario/io
    "Scenario",
    "validate_scenario",
    "load_scenario",
    "save_scenario",
    "run_scenario",
    "save_trajectory",
    "load_trajectory",
    "save_wind_series",
    "load_wind_series",
    "save_stats",
    "load_stats",
    "scenario_hash",
    "RunArtifact",
    "emit_plot_data",
]
