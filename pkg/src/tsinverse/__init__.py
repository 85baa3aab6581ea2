"""Inverse problems for time-series simulators via scalarization.

Given a deterministic simulator producing a time series and a target series,
the package scalarizes the discrepancy to w(x) = RMS(g(x) - g0), then finds
the global minimizer of w with expected-improvement sequential design over
either a Gaussian process surrogate on w (or log w) or a Bayesian sum-of-trees
surrogate on log w.
"""

from .acquisition import (
    AcquisitionResult,
    expected_improvement,
    expected_improvement_from_draws,
    maximize_expected_improvement,
)
from .bart import BartRegressor, quantiles_from_draws, sigma_prior_scale
from .design import latin_hypercube
from .experiment import (
    ConfigError,
    ExperimentConfig,
    build_simulator,
    build_target,
    emit_comparison,
    load_target,
    parse_config,
    read_trace,
    run_experiment,
    save_target,
    write_trace,
)
from .gp import GaussianProcessSurrogate, GPFitError, correlation_matrix, profile_objective
from .objective import log_objective, rms_distance
from .sequential import (
    SURROGATES,
    RunTrace,
    SequentialConfig,
    SimulationFailed,
    run_sequential,
)
from .simulators import (
    BUILTIN_SIMULATORS,
    DEFAULT_GRID,
    Benchmark1,
    Benchmark2,
    Benchmark3,
    ExternalSimulator,
    Simulator,
    SimulatorError,
    SimulatorOutputError,
    SimulatorProcessError,
    SimulatorTimeoutError,
    TargetSeries,
    TimeGrid,
    TimeSeries,
    get_simulator,
    make_target,
)

__version__ = "0.1.0"

__all__ = [
    "AcquisitionResult",
    "BartRegressor",
    "Benchmark1",
    "Benchmark2",
    "Benchmark3",
    "BUILTIN_SIMULATORS",
    "ConfigError",
    "DEFAULT_GRID",
    "ExperimentConfig",
    "ExternalSimulator",
    "GaussianProcessSurrogate",
    "GPFitError",
    "RunTrace",
    "SequentialConfig",
    "SimulationFailed",
    "Simulator",
    "SimulatorError",
    "SimulatorOutputError",
    "SimulatorProcessError",
    "SimulatorTimeoutError",
    "SURROGATES",
    "TargetSeries",
    "TimeGrid",
    "TimeSeries",
    "build_simulator",
    "build_target",
    "correlation_matrix",
    "emit_comparison",
    "expected_improvement",
    "expected_improvement_from_draws",
    "get_simulator",
    "latin_hypercube",
    "load_target",
    "log_objective",
    "make_target",
    "maximize_expected_improvement",
    "parse_config",
    "profile_objective",
    "quantiles_from_draws",
    "read_trace",
    "rms_distance",
    "run_experiment",
    "run_sequential",
    "save_target",
    "sigma_prior_scale",
    "write_trace",
    "__version__",
]
