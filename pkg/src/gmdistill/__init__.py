"""Score-distillation estimators on analytic Gaussian-mixture diffusion targets.

The package provides exact closed-form denoisers for Gaussian-mixture targets
under a variance-preserving forward process, the family of noise-residual
estimators built from them (CFG, mode-seeking, mode-disengaging, and the
threshold-switched SSD rule with adaptive variance reduction), a deterministic
trajectory simulator, and Monte-Carlo analysis tooling.
"""

from .analysis import (
    DensityMap,
    ModeSet,
    StatSweep,
    density_map,
    find_modes,
    sds_loss_estimate,
    stat_sweep,
    transient_onset,
)
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .estimators import (
    EstimatorOutput,
    EstimatorSpec,
    mode_disengaging,
    mode_seeking,
    optimal_c,
    projection_ratio,
    sds_estimator,
    ssd_estimator,
    variance_reduced_mode_seeking,
)
from .gmm import (
    GaussianComponent,
    GaussianMixture,
    conditional_view,
    denoiser_eps,
    log_density,
    noised_marginal,
    score,
)
from .schedule import DiffusionSchedule, NoisySample, forward_noise, make_schedule
from .simulate import (
    DivergenceError,
    OptimizerConfig,
    Trajectory,
    run_trajectory,
    run_trap_escape,
    sample_timestep,
)

__version__ = "0.1.0"

__all__ = [
    "DensityMap", "ModeSet", "StatSweep", "density_map", "find_modes",
    "sds_loss_estimate", "stat_sweep", "transient_onset",
    "ConfigError", "ExperimentConfig", "load_config", "parse_config",
    "EstimatorOutput", "EstimatorSpec", "mode_disengaging", "mode_seeking",
    "optimal_c", "projection_ratio", "sds_estimator", "ssd_estimator",
    "variance_reduced_mode_seeking",
    "GaussianComponent", "GaussianMixture", "conditional_view", "denoiser_eps",
    "log_density", "noised_marginal", "score",
    "DiffusionSchedule", "NoisySample", "forward_noise", "make_schedule",
    "DivergenceError", "OptimizerConfig", "Trajectory", "run_trajectory",
    "run_trap_escape", "sample_timestep",
    "__version__",
]
