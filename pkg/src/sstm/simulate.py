"""Synthetic cohort generator with calibrated censoring.

The generator draws equicorrelated normal covariates, an event time from a
log-linear probit model, uniform censoring calibrated to a target event rate,
and K error-prone surrogate times whose log-scale errors follow two-component
normal mixtures. The true coefficient vector is exposed for scoring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._seeds import seed_sequence
from .data import Dataset
from .exceptions import CalibrationError, InvalidArgumentError

# Sub-stream tags so calibration, generation, and downstream consumers of the
# same user seed never share a stream.
_CAL_TAG = 0x5E11C
_GEN_TAG = 0x6E47A


@dataclass(frozen=True)
class MixtureParams:
    """Two-component normal mixture for one surrogate's log-scale error."""

    mu_minus: float
    sigma_minus: float
    mu_plus: float
    sigma_plus: float
    mix_prob: float = 0.5

    def __post_init__(self):
        if self.sigma_minus <= 0.0 or self.sigma_plus <= 0.0:
            raise InvalidArgumentError("mixture standard deviations must be positive")
        if not 0.0 <= self.mix_prob <= 1.0:
            raise InvalidArgumentError("mix_prob must lie in [0, 1]")


SCENARIO_A = (
    MixtureParams(0.2, 0.3, -0.1, 0.1),
    MixtureParams(0.0, 0.2, 0.3, 0.1),
)
SCENARIO_B = (
    MixtureParams(1.0, 1.5, -0.5, 0.5),
    MixtureParams(0.0, 1.0, 1.5, 0.5),
)
_SCENARIOS = {"A_low": SCENARIO_A, "B_high": SCENARIO_B}

BETA0 = np.array([0.7, 0.7, 0.7, -0.5, -0.5, -0.5, 0.3, 0.3, 0.3, 0.0])
BETA0.setflags(write=False)


@dataclass(frozen=True)
class SimulationSpec:
    """Design of one synthetic cohort."""

    n: int
    N: int
    seed: int | tuple
    error_scenario: str | Sequence[MixtureParams] = "A_low"
    p: int = 10
    K: int = 2
    covariate_correlation: float = 0.2
    target_event_rate: float = 0.5
    censoring_scale: float | None = None

    def __post_init__(self):
        if self.n < 1 or self.N < self.n:
            raise InvalidArgumentError("need 1 <= n <= N")
        if self.p != BETA0.size:
            raise InvalidArgumentError(f"the generator is defined for p = {BETA0.size}")
        if not 0.0 < self.target_event_rate < 1.0:
            raise InvalidArgumentError("target_event_rate must lie in (0, 1)")
        if not 0.0 <= self.covariate_correlation < 1.0:
            raise InvalidArgumentError("covariate_correlation must lie in [0, 1)")
        mixtures = self.mixtures
        if len(mixtures) != self.K:
            raise InvalidArgumentError(f"need one mixture per surrogate (K = {self.K})")
        if self.censoring_scale is not None and self.censoring_scale <= 0.0:
            raise InvalidArgumentError("censoring_scale must be positive")

    @property
    def mixtures(self) -> tuple[MixtureParams, ...]:
        if isinstance(self.error_scenario, str):
            try:
                return _SCENARIOS[self.error_scenario]
            except KeyError:
                raise InvalidArgumentError(
                    f"unknown error scenario {self.error_scenario!r}; expected "
                    f"one of {sorted(_SCENARIOS)} or explicit MixtureParams"
                ) from None
        return tuple(self.error_scenario)

    @property
    def scenario_label(self) -> str:
        return self.error_scenario if isinstance(self.error_scenario, str) else "custom"


@dataclass(frozen=True)
class GroundTruth:
    """What the generator knows: the estimand and the design constants."""

    beta0: np.ndarray
    h0: Callable[[np.ndarray], np.ndarray]
    link: str
    censoring_scale: float
    seed: int
    scenario: str


def _h0(t):
    return 3.0 * np.log(np.asarray(t, dtype=float) / 4.0)


def _total_sd(spec: SimulationSpec) -> float:
    # Var of the linear predictor under equicorrelated unit-variance Z,
    # plus the unit-variance model error.
    coef = -BETA0
    rho = spec.covariate_correlation
    ssq = float(np.sum(coef**2))
    s = float(np.sum(coef))
    return math.sqrt((1.0 - rho) * ssq + rho * s * s + 1.0)


def calibrate_censoring(spec: SimulationSpec, draws: int = 32_000_000) -> float:
    """Scale ``a`` of the Uniform(0, a) censoring law hitting the target rate.

    Bisects the Monte Carlo event rate P(T <= C) computed on one fixed sample
    of ``draws`` (T, U) pairs, so the root is deterministic given the spec
    seed. Raises CalibrationError when no root lies in (1e-6, 1e6).
    """
    if draws < 200_000:
        raise InvalidArgumentError("calibration needs at least 2e5 draws")
    rng = np.random.default_rng(seed_sequence(spec.seed, _CAL_TAG))
    sd = _total_sd(spec)
    # T = 4 * exp(normal * sd / 3); rate(a) = P(T <= a U) = P(T / U <= a).
    batch = 2_000_000
    ratios = np.empty(draws)
    done = 0
    while done < draws:
        m = min(batch, draws - done)
        t = 4.0 * np.exp(rng.standard_normal(m) * (sd / 3.0))
        u = rng.uniform(0.0, 1.0, m)
        ratios[done : done + m] = t / u
        done += m
    ratios.sort()
    target = spec.target_event_rate

    def rate(a: float) -> float:
        return np.searchsorted(ratios, a, side="right") / draws

    lo, hi = 1e-6, 1e6
    if not (rate(lo) < target < rate(hi)):
        raise CalibrationError(
            f"event rate {target} not bracketed on ({lo:g}, {hi:g}): "
            f"rate({lo:g})={rate(lo):.4f}, rate({hi:g})={rate(hi):.4f}"
        )
    while hi - lo > 1e-9 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if rate(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def generate(spec: SimulationSpec) -> tuple[Dataset, GroundTruth]:
    """Draw one cohort; bit-for-bit reproducible given ``spec.seed``.

    Draw order is fixed: covariates, model error, censoring, then per
    surrogate the mixture component and the measurement error.
    """
    a = spec.censoring_scale if spec.censoring_scale is not None else calibrate_censoring(spec)
    rng = np.random.default_rng(seed_sequence(spec.seed, _GEN_TAG))
    N, p = spec.N, spec.p
    rho = spec.covariate_correlation

    W = rng.standard_normal((N, p))
    shared = rng.standard_normal(N)
    Z = math.sqrt(1.0 - rho) * W + math.sqrt(rho) * shared[:, None]

    eps = rng.standard_normal(N)
    logT = np.log(4.0) + (Z @ (-BETA0) + eps) / 3.0
    T = np.exp(logT)
    C = a * rng.uniform(0.0, 1.0, N)

    delta = np.full(N, np.nan)
    labeled = np.zeros(N, dtype=bool)
    labeled[: spec.n] = True
    delta[: spec.n] = (T[: spec.n] <= C[: spec.n]).astype(float)

    X = np.empty((N, spec.K))
    Dlt = np.empty((N, spec.K), dtype=np.int8)
    for k, mix in enumerate(spec.mixtures):
        comp = rng.uniform(0.0, 1.0, N) < mix.mix_prob
        err = np.where(
            comp,
            rng.normal(mix.mu_minus, mix.sigma_minus, N),
            rng.normal(mix.mu_plus, mix.sigma_plus, N),
        )
        Tk = T * np.exp(err)
        Dlt[:, k] = Tk <= C
        X[:, k] = np.minimum(Tk, C)

    ids = [f"s{i + 1:06d}" for i in range(N)]
    dataset = Dataset(ids, labeled, delta, C, Z, X, Dlt)
    truth = GroundTruth(
        beta0=BETA0.copy(),
        h0=_h0,
        link="probit",
        censoring_scale=a,
        seed=spec.seed,
        scenario=spec.scenario_label,
    )
    return dataset, truth
