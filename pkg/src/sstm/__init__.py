"""Semi-supervised risk prediction for event times.

Estimates a semiparametric transformation model P(T <= t | Z) =
g(h(t) + beta'Z) from a small labeled set carrying only the current status
I(T <= C) and a large unlabeled set carrying error-prone surrogate event
times. An initial labeled-data estimator is corrected with kernel-smoothed
IPCW rank-correlation scores computed on the whole cohort; combination
weights and confidence intervals come from perturbation resampling.
"""

from . import exceptions
from .combine import (
    CombinationWeights,
    PerturbationDraw,
    Projection,
    build_projection,
    combine,
    estimate_weights,
    load_draws,
    regime_projections,
    run_perturbations,
    save_draws,
)
from .data import Dataset, RegimeConfig, Subject, load_dataset, resolve_regime, save_dataset
from .inference import (
    InferenceReport,
    SslFit,
    ci_recentered_quantile,
    cv_lambda_soft,
    default_lambda_grid,
    infer,
    perturbed_ssl,
    recenter_sign_preserving,
    soft_threshold_std,
)
from .kernels import (
    BandwidthConfig,
    GaussianKernel,
    Link,
    auto_bandwidths,
    get_link,
    kernel_density,
    supervised_bandwidth,
)
from .pipeline import PipelineResult, fit_ssl
from .scores import (
    CensoringSurvival,
    RankCorrelation,
    ScoreBundle,
    fit_censoring,
    rank_correlation,
    smoothed_score,
    stacked_score,
)
from .simulate import (
    BETA0,
    SCENARIO_A,
    SCENARIO_B,
    GroundTruth,
    MixtureParams,
    SimulationSpec,
    calibrate_censoring,
    generate,
)
from .study import MetricsTable, StudyConfig, run_study
from .supervised import (
    SupervisedFit,
    ThresholdConfig,
    fit_supervised,
    fit_supervised_perturbed,
    predict_risk,
    recover_support,
)

__version__ = "0.1.0"

__all__ = [
    "BETA0",
    "BandwidthConfig",
    "CensoringSurvival",
    "CombinationWeights",
    "Dataset",
    "GaussianKernel",
    "GroundTruth",
    "InferenceReport",
    "Link",
    "MetricsTable",
    "MixtureParams",
    "PerturbationDraw",
    "PipelineResult",
    "Projection",
    "RankCorrelation",
    "RegimeConfig",
    "SCENARIO_A",
    "SCENARIO_B",
    "ScoreBundle",
    "SimulationSpec",
    "SslFit",
    "StudyConfig",
    "Subject",
    "SupervisedFit",
    "ThresholdConfig",
    "auto_bandwidths",
    "build_projection",
    "calibrate_censoring",
    "ci_recentered_quantile",
    "combine",
    "cv_lambda_soft",
    "default_lambda_grid",
    "estimate_weights",
    "exceptions",
    "fit_censoring",
    "fit_ssl",
    "fit_supervised",
    "fit_supervised_perturbed",
    "generate",
    "get_link",
    "infer",
    "kernel_density",
    "load_dataset",
    "load_draws",
    "perturbed_ssl",
    "predict_risk",
    "rank_correlation",
    "recenter_sign_preserving",
    "recover_support",
    "regime_projections",
    "resolve_regime",
    "run_perturbations",
    "run_study",
    "save_dataset",
    "save_draws",
    "smoothed_score",
    "soft_threshold_std",
    "stacked_score",
    "supervised_bandwidth",
]
