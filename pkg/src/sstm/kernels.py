"""Smoothing kernels, link functions, and bandwidth rules."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit, ndtr, ndtri

from .exceptions import DegenerateDataError, InvalidArgumentError

_SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianKernel:
    """Standard normal density, the built-in smooth symmetric kernel.

    ``evaluate`` is the density K(u) and ``antiderivative`` its cumulative
    F(u) = int_{-inf}^u K. Both accept scalars or arrays.
    """

    family: str = "gaussian"

    def evaluate(self, u):
        u = np.asarray(u, dtype=float)
        return np.exp(-0.5 * u * u) / _SQRT2PI

    def antiderivative(self, u):
        return ndtr(np.asarray(u, dtype=float))


def kernel_density(kernel, u, h):
    """Scaled kernel h**-1 * K(u / h).

    Raises InvalidArgumentError on non-finite ``u`` or ``h <= 0``.
    """
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise InvalidArgumentError("kernel argument must be finite")
    if not (np.isscalar(h) or np.ndim(h) == 0) or not math.isfinite(float(h)) or float(h) <= 0.0:
        raise InvalidArgumentError(f"bandwidth must be a positive finite scalar, got {h!r}")
    h = float(h)
    return kernel.evaluate(u / h) / h


class Link:
    """Known monotone link mapping the linear predictor to a probability.

    Families: ``logistic`` (expit) and ``probit`` (standard normal CDF).
    ``g`` is the CDF, ``gprime`` its density, ``ginv`` the quantile function.
    """

    _FAMILIES = ("logistic", "probit")

    def __init__(self, family: str):
        if family not in self._FAMILIES:
            raise InvalidArgumentError(f"unknown link family {family!r}; expected one of {self._FAMILIES}")
        self.family = family

    def g(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "logistic":
            return expit(x)
        return ndtr(x)

    def gprime(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "logistic":
            p = expit(x)
            return p * (1.0 - p)
        return np.exp(-0.5 * x * x) / _SQRT2PI

    def ginv(self, prob):
        prob = np.asarray(prob, dtype=float)
        if self.family == "logistic":
            return logit(prob)
        return ndtri(prob)

    def __repr__(self):
        return f"Link({self.family!r})"

    def __eq__(self, other):
        return isinstance(other, Link) and other.family == self.family


def get_link(family: str) -> Link:
    return Link(family)


@dataclass(frozen=True)
class BandwidthConfig:
    """Bandwidths for the two smoothing steps.

    ``h_supervised`` smooths over follow-up time in the labeled-data fit;
    ``h_score`` has one entry per surrogate and smooths over the projected
    covariate index. ``h_score`` may be None until a direction is available.
    """

    h_supervised: float
    h_score: np.ndarray | None = None
    rule: str = "manual"

    def __post_init__(self):
        if not (math.isfinite(self.h_supervised) and self.h_supervised > 0.0):
            raise InvalidArgumentError("h_supervised must be a positive finite real")
        if self.h_score is not None:
            hs = np.atleast_1d(np.asarray(self.h_score, dtype=float))
            if hs.ndim != 1 or not np.all(np.isfinite(hs)) or np.any(hs <= 0.0):
                raise InvalidArgumentError("h_score entries must be positive finite reals")
            object.__setattr__(self, "h_score", hs)
        if self.rule not in ("auto", "manual"):
            raise InvalidArgumentError(f"unknown bandwidth rule {self.rule!r}")


def supervised_bandwidth(dataset) -> float:
    """Follow-up-time bandwidth: sd(C over labeled) * (sum of labeled events)**-0.25."""
    lab = dataset.labeled
    if not np.any(lab):
        raise DegenerateDataError("no labeled subjects: cannot set the supervised bandwidth")
    c_lab = dataset.C[lab]
    n_events = float(np.sum(dataset.delta[lab]))
    if n_events <= 0.0:
        raise DegenerateDataError("no labeled events: cannot set the supervised bandwidth")
    sd_c = float(np.std(c_lab, ddof=1)) if c_lab.size > 1 else 0.0
    if sd_c <= 0.0:
        raise DegenerateDataError("labeled follow-up times are constant")
    return sd_c * n_events ** -0.25


def auto_bandwidths(dataset, beta_dir) -> BandwidthConfig:
    """Data-driven bandwidths for the supervised fit and the surrogate scores.

    h_supervised = sd(C over labeled) * (sum_i delta_i)**-0.25 and, per
    surrogate k, h_score[k] = sd(beta_dir' Z over the full cohort) *
    (sum_i Delta_ki)**-0.3.
    """
    h_sup = supervised_bandwidth(dataset)
    beta_dir = np.asarray(beta_dir, dtype=float)
    if beta_dir.shape != (dataset.p,):
        raise InvalidArgumentError(f"beta_dir must have length p={dataset.p}")
    u = dataset.Z @ beta_dir
    sd_u = float(np.std(u, ddof=1)) if u.size > 1 else 0.0
    if sd_u <= 0.0:
        raise DegenerateDataError("projected covariate index is constant")
    counts = dataset.Dlt.sum(axis=0).astype(float)
    if np.any(counts <= 0.0):
        bad = int(np.argmin(counts))
        raise DegenerateDataError(f"surrogate {bad} has no observed events")
    h_score = sd_u * counts ** -0.3
    return BandwidthConfig(h_supervised=h_sup, h_score=h_score, rule="auto")
