"""Bayesian reconstruction of a tank's initial liquid level.

A physics forward model (Torricelli drainage through a small orifice in a
truncated-pyramid tank) is combined with a Bernstein-polynomial model
discrepancy, priors over geometry, flow, noise and episode start
conditions, and an adaptive MCMC sampler.  Given calibration drainage
series and a single post-drainage observation, the posterior over the
episode's start time and start level answers "how full was the tank when
the spill began?".
"""

from .diagnostics import (
    DiagnosticError,
    DiscrepancyResidualTable,
    ParameterSummary,
    PosteriorSummary,
    build_posterior_summary,
    credible_interval,
    discrepancy_vs_residuals,
    effective_sample_size,
    gelman_rubin,
    posterior_correlation,
    split_rhat,
    trajectory_mae,
)
from .discrepancy import (
    DiscrepancyCoefficients,
    bernstein_basis,
    corrected_level,
    evaluate_discrepancy,
)
from .forward import (
    GRAVITY_CM_S2,
    InitialCondition,
    LevelTrajectory,
    Orifice,
    PhysicalConstants,
    SolverError,
    TankGeometry,
    cross_section_area,
    drain_rate,
    level_at,
    prism_level_closed_form,
    simulate_level,
    tank_volume,
)
from .io import (
    ConfigError,
    DatasetFormatError,
    RunConfig,
    SimulateScenario,
    load_config,
    load_dataset,
    load_samples,
    write_dataset,
    write_samples,
)
from .model import (
    BetaPrior,
    Dataset,
    Experiment,
    ExponentialPrior,
    GaussianPrior,
    LaplacePrior,
    ObservationDesign,
    ParameterSpace,
    ParameterVector,
    PosteriorDensity,
    PriorSpec,
    default_prior_spec,
    log_likelihood,
    log_posterior_unnorm,
    log_prior,
    predicted_level_series,
    predicted_observation_mean,
    sample_prior,
    simulate_dataset,
)
from .sampler import (
    ChainTrace,
    InitializationError,
    SamplerConfig,
    initialize_from_prior,
    run_chain,
    run_chains,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # forward model
    "GRAVITY_CM_S2",
    "TankGeometry",
    "Orifice",
    "PhysicalConstants",
    "InitialCondition",
    "LevelTrajectory",
    "SolverError",
    "cross_section_area",
    "tank_volume",
    "drain_rate",
    "simulate_level",
    "level_at",
    "prism_level_closed_form",
    # discrepancy
    "DiscrepancyCoefficients",
    "bernstein_basis",
    "evaluate_discrepancy",
    "corrected_level",
    # probabilistic model
    "GaussianPrior",
    "BetaPrior",
    "ExponentialPrior",
    "LaplacePrior",
    "PriorSpec",
    "default_prior_spec",
    "ParameterVector",
    "ParameterSpace",
    "Experiment",
    "Dataset",
    "ObservationDesign",
    "PosteriorDensity",
    "log_prior",
    "log_likelihood",
    "log_posterior_unnorm",
    "predicted_level_series",
    "predicted_observation_mean",
    "sample_prior",
    "simulate_dataset",
    # sampler
    "SamplerConfig",
    "ChainTrace",
    "InitializationError",
    "run_chain",
    "run_chains",
    "initialize_from_prior",
    # diagnostics
    "DiagnosticError",
    "gelman_rubin",
    "split_rhat",
    "effective_sample_size",
    "credible_interval",
    "posterior_correlation",
    "trajectory_mae",
    "discrepancy_vs_residuals",
    "DiscrepancyResidualTable",
    "ParameterSummary",
    "PosteriorSummary",
    "build_posterior_summary",
    # io
    "DatasetFormatError",
    "ConfigError",
    "RunConfig",
    "SimulateScenario",
    "load_dataset",
    "write_dataset",
    "load_samples",
    "write_samples",
    "load_config",
]
