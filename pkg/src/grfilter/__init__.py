"""Twin-experiment toolkit: exact spectral dynamics, correlated-error synthetic
observations, a bootstrap particle filter with a scale-dependent surrogate
observation-error covariance, the exact Kalman reference, and ensemble
verification metrics."""

from .config import ExperimentConfig, SweepSpec, parse_config
from .dynamics import (
    ModelParams,
    RngStream,
    SpectralField,
    grid_to_spectral,
    mode_rate,
    noise_amplitude,
    propagate,
    sample_stationary,
    spectral_to_grid,
)
from .kalman import (
    GaussianState,
    KfRun,
    ModePosterior,
    TauReport,
    kf_forecast,
    kf_update,
    mode_posterior_stats,
    powerlaw_tau,
    run_kf,
    snyder_tau_squared,
)
from .metrics import (
    BoxplotSummary,
    WeightedSample,
    crps_field,
    crps_weighted,
    ensemble_spread,
    normalized_mode_rmse,
    rmse,
    summarize_boxplot,
)
from .observations import (
    GrfErrorModel,
    ObservationOperator,
    ObservationSet,
    TrueErrorModel,
    grf_matrix,
    grf_quadratic_form,
    grf_spectrum,
    observe_truth,
    smoothed_weight_exponent,
    smoothing_factor,
    true_error_covariance,
)
from .sir import (
    Ensemble,
    FilterConfig,
    FilterRun,
    assimilate_step,
    effective_sample_size,
    init_ensemble,
    resample_multinomial,
    run_sir,
)
from .experiment import (
    generate_observations,
    generate_truth,
    run_experiment,
    run_filter_experiment,
    run_kalman_experiment,
    sweep_and_emit,
)

__version__ = "0.1.0"
