"""End-to-end estimation: supervised fit, scores, combination, inference."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .combine import (
    CombinationWeights,
    combine,
    estimate_weights,
    regime_projections,
    run_perturbations,
)
from .data import Dataset, RegimeConfig, resolve_regime
from .inference import (
    InferenceReport,
    SslFit,
    cv_lambda_soft,
    infer,
    perturbed_ssl,
    soft_threshold_std,
)
from .kernels import GaussianKernel, Link, auto_bandwidths, BandwidthConfig
from .scores import ScoreBundle, stacked_score
from .supervised import SupervisedFit, ThresholdConfig, fit_supervised, recover_support


@dataclass
class PipelineResult:
    """Everything one end-to-end fit produces."""

    supervised: SupervisedFit
    bundle: ScoreBundle
    weights: CombinationWeights
    ssl: SslFit
    report: InferenceReport
    bandwidths: BandwidthConfig
    support: tuple[int, ...]
    regime: str


def fit_ssl(
    dataset: Dataset,
    *,
    link: str | Link = "probit",
    B: int = 200,
    seed=0,
    regime: str = "auto",
    rho_threshold: float = 0.1,
    alpha: float = 0.05,
    lambda_delta: float | None = None,
    lambda_soft: float | None = None,
    lambda_grid=None,
    std_inference: bool | None = None,
    n_jobs: int = 1,
    cache_dir=None,
    g_min: float = 0.0,
    kernel_cutoff: float = 10.0,
) -> PipelineResult:
    """Run the full semi-supervised pipeline on one cohort.

    Fits the labeled-data estimator, evaluates the stacked surrogate scores
    at its direction, draws B perturbation replicates, estimates combination
    weights with the regime's projection family, combines, and builds the
    inference report. ``std_inference`` forces (or suppresses) the
    soft-threshold standardization; by default it follows the regime.
    """
    link = Link(link) if isinstance(link, str) else link
    kernel = GaussianKernel()
    regime = resolve_regime(dataset, RegimeConfig(regime=regime, rho_threshold=rho_threshold))

    threshold = ThresholdConfig(lambda_delta=lambda_delta, lambda_soft=lambda_soft)
    fit_delta = fit_supervised(dataset, link, kernel, threshold=threshold)
    support = recover_support(fit_delta, threshold)
    b_dir = fit_delta.beta / np.linalg.norm(fit_delta.beta)
    bw = auto_bandwidths(dataset, b_dir)

    bundle = stacked_score(
        dataset, b_dir, kernel, bw, g_min=g_min, kernel_cutoff=kernel_cutoff
    )
    draws = run_perturbations(
        dataset,
        link,
        kernel,
        bw,
        B=B,
        seed=seed,
        warm_start=fit_delta,
        n_jobs=n_jobs,
        g_min=g_min,
        kernel_cutoff=kernel_cutoff,
        cache_dir=cache_dir,
    )
    projections = regime_projections(regime, dataset.p, dataset.K, support)
    weights = estimate_weights(draws, projections, support)
    ssl = combine(fit_delta, bundle, weights, regime)
    ssl.replicates = perturbed_ssl(draws, weights)

    if std_inference is None:
        std_inference = regime == "large_unlabeled"
    if std_inference:
        lam = lambda_soft
        if lam is None:
            lam = cv_lambda_soft(dataset, ssl, lambda_grid, seed=seed)
        ssl.lambda_soft_used = lam
        ssl.beta_std = soft_threshold_std(ssl.beta_ssl, lam)

    report = infer(ssl, ssl.replicates, regime, alpha)
    return PipelineResult(
        supervised=fit_delta,
        bundle=bundle,
        weights=weights,
        ssl=ssl,
        report=report,
        bandwidths=bw,
        support=support,
        regime=regime,
    )
