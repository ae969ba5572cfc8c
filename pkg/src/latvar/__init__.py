"""Causal discovery for lag-1 VAR time series under latent exogenous interference."""

from .errors import (
    ConfigError,
    DegenerateConfigError,
    LatvarError,
    SimulationError,
    SpectralRadiusError,
    TrainingDivergenceError,
    ValidationError,
)
from .evaluation import (
    MetricsReport,
    aggregate,
    baseline_var_ols,
    extract_adjacency,
    match_latents,
    prf1,
    score_against_truth,
)
from .likelihood import (
    PriorConfig,
    gmm_logpdf,
    gmm_logpdf_rows,
    latent_logprior,
    obs_loglik,
    prior_logprob,
    residuals,
)
from .model import (
    CausalParams,
    GmmNoiseParams,
    GroundTruth,
    ModelDims,
    NoiseSpec,
    TimeSeriesDataset,
    causal_matrix,
    spectral_radius,
    validate_block_structure,
)
from .simulate import (
    GenConfig,
    check_assumptions,
    generate_dataset,
    sample_ground_truth,
    sample_noise,
    simulate_series,
)
from .vi import (
    FittedModel,
    TrainConfig,
    VariationalState,
    fit,
    init_state,
    mc_objective,
    objective_grad,
    sample_concrete,
    sample_gaussian_reparam,
)

__version__ = "0.1.0"

__all__ = [
    "CausalParams",
    "ConfigError",
    "DegenerateConfigError",
    "FittedModel",
    "GenConfig",
    "GmmNoiseParams",
    "GroundTruth",
    "LatvarError",
    "MetricsReport",
    "ModelDims",
    "NoiseSpec",
    "PriorConfig",
    "SimulationError",
    "SpectralRadiusError",
    "TimeSeriesDataset",
    "TrainConfig",
    "TrainingDivergenceError",
    "ValidationError",
    "VariationalState",
    "aggregate",
    "baseline_var_ols",
    "causal_matrix",
    "check_assumptions",
    "extract_adjacency",
    "fit",
    "generate_dataset",
    "gmm_logpdf",
    "gmm_logpdf_rows",
    "init_state",
    "latent_logprior",
    "match_latents",
    "mc_objective",
    "obs_loglik",
    "objective_grad",
    "prf1",
    "prior_logprob",
    "residuals",
    "sample_concrete",
    "sample_gaussian_reparam",
    "sample_ground_truth",
    "sample_noise",
    "score_against_truth",
    "simulate_series",
    "spectral_radius",
    "validate_block_structure",
    "__version__",
]
