"""Resampling-based interval estimation for the combined estimator.

Two interval constructions ship. The comparable regime re-centers empirical
quantiles of the perturbed replicates around the point estimate. The
large-unlabeled regime first applies norm-preserving soft-thresholding to the
point estimate and every replicate (the estimation error concentrates along
the fitted direction there, making raw replicate quantiles invalid for zero
coordinates), re-centers with a sign-preserving shift, and reads off raw
quantiles. The threshold is picked by cross-validating the aggregated rank
correlation.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._seeds import seed_sequence
from .exceptions import AllZeroError, InvalidArgumentError
from .scores import fit_censoring, rank_correlation

_CV_TAG = 0xCF01D


@dataclass
class SslFit:
    """Combined estimator with its resampling replicates.

    ``beta_std`` and ``lambda_soft_used`` are filled once soft-thresholding
    has run; ``replicates`` holds the per-draw combined estimates row-wise.
    """

    beta_ssl: np.ndarray
    beta_delta: np.ndarray
    regime: str
    replicates: np.ndarray | None = None
    beta_std: np.ndarray | None = None
    lambda_soft_used: float | None = None

    @property
    def p(self) -> int:
        return self.beta_ssl.size

    def to_json(self, path=None) -> str:
        payload = {
            "beta_ssl": self.beta_ssl.tolist(),
            "beta_delta": self.beta_delta.tolist(),
            "regime": self.regime,
            "replicates": None if self.replicates is None else self.replicates.tolist(),
            "beta_std": None if self.beta_std is None else self.beta_std.tolist(),
            "lambda_soft_used": self.lambda_soft_used,
        }
        text = json.dumps(payload, indent=2)
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_json(cls, text_or_path) -> "SslFit":
        text = str(text_or_path)
        if not text.lstrip().startswith("{"):
            text = Path(text).read_text(encoding="utf-8")
        d = json.loads(text)
        return cls(
            beta_ssl=np.asarray(d["beta_ssl"], dtype=float),
            beta_delta=np.asarray(d["beta_delta"], dtype=float),
            regime=d["regime"],
            replicates=None if d["replicates"] is None else np.asarray(d["replicates"], dtype=float),
            beta_std=None if d["beta_std"] is None else np.asarray(d["beta_std"], dtype=float),
            lambda_soft_used=d["lambda_soft_used"],
        )


def perturbed_ssl(draws, W) -> np.ndarray:
    """Per-draw combined estimates beta_delta^(b) - W_comb' S^(b), stacked row-wise.

    The estimated combination matrix is reused across draws: the perturbed
    score vanishes asymptotically, so its estimation error is second-order
    and needs no extra perturbation layer. Also fills ``draw.beta_ssl``.
    """
    out = np.empty((len(draws), draws[0].beta_delta.size))
    WT = W.W_comb.T
    for i, d in enumerate(draws):
        d.beta_ssl = d.beta_delta - WT @ d.score
        out[i] = d.beta_ssl
    return out


def ci_recentered_quantile(replicates, point, v, alpha: float) -> tuple[float, float]:
    """Re-centered empirical quantile interval for the contrast v'beta.

    [ Q_{a/2} + v'point - mean_b(v'beta^(b)),  Q_{1-a/2} + same shift ]
    with quantiles linearly interpolated between order statistics
    (h = (B-1)q + 1).
    """
    replicates = np.asarray(replicates, dtype=float)
    if replicates.ndim == 1:
        replicates = replicates[:, None]
    if replicates.shape[0] < 2:
        raise InvalidArgumentError("need at least two replicates for quantile intervals")
    if not 0.0 < alpha <= 1.0:
        raise InvalidArgumentError("alpha must lie in (0, 1]")
    v = np.asarray(v, dtype=float)
    proj = replicates @ v
    shift = float(np.asarray(point, dtype=float) @ v) - float(np.mean(proj))
    lo = float(np.quantile(proj, alpha / 2.0)) + shift
    hi = float(np.quantile(proj, 1.0 - alpha / 2.0)) + shift
    return lo, hi


def soft_threshold_std(beta, lambda_soft: float) -> np.ndarray:
    """Norm-preserving soft-thresholding with the adaptive penalty lambda/|b_j|.

    soft_j = sign(b_j) max(|b_j| - lambda/|b_j|, 0), rescaled so the output
    keeps the euclidean norm of the input. Raises AllZeroError when every
    coordinate is shrunk away.
    """
    if lambda_soft <= 0.0:
        raise InvalidArgumentError("lambda_soft must be positive")
    beta = np.asarray(beta, dtype=float)
    ab = np.abs(beta)
    shrunk = np.where(ab > 0.0, ab - lambda_soft / np.where(ab > 0.0, ab, 1.0), -1.0)
    soft = np.sign(beta) * np.maximum(shrunk, 0.0)
    nrm_soft = float(np.linalg.norm(soft))
    if nrm_soft == 0.0:
        raise AllZeroError(f"lambda_soft={lambda_soft:g} zeroed every coordinate")
    return soft * (float(np.linalg.norm(beta)) / nrm_soft)


def recenter_sign_preserving(std_replicates, std_point) -> np.ndarray:
    """Shift replicates toward the point estimate without crossing zero.

    centered_j^(b) = sign(r) max(|r| + sign(r) (point_j - mean_b r), 0)
    with r = std_replicates[b, j] and sign(0) = 0, so exactly-zero replicate
    coordinates stay zero.
    """
    reps = np.asarray(std_replicates, dtype=float)
    point = np.asarray(std_point, dtype=float)
    shift = point - reps.mean(axis=0)
    sgn = np.sign(reps)
    return sgn * np.maximum(np.abs(reps) + sgn * shift[None, :], 0.0)


def default_lambda_grid(n: int, size: int = 20) -> np.ndarray:
    """Log-spaced grid strictly inside (1/n, 1/sqrt(n)), endpoints shrunk 2x."""
    lo = 2.0 / n
    hi = 0.5 / np.sqrt(n)
    if not lo < hi:
        raise InvalidArgumentError(f"n={n} leaves no room between 1/n and n**-0.5")
    return np.geomspace(lo, hi, size)


def cv_lambda_soft(
    dataset,
    fit: SslFit,
    grid=None,
    *,
    n_folds: int = 5,
    seed: int = 0,
) -> float:
    """Pick the soft-threshold level by cross-validated rank correlation.

    Subjects are split into folds; for each fold the censoring survival is
    fitted on the remaining subjects and the aggregated normalized rank
    correlation of the thresholded estimate is evaluated on the held-out
    fold. Returns the grid value with the highest average; ties go to the
    smaller value. If every grid value zeroes the estimate, falls back to
    the geometric mean of the grid endpoints with a warning.
    """
    n = dataset.n
    grid = default_lambda_grid(n) if grid is None else np.sort(np.asarray(grid, dtype=float))
    if grid.size < 1 or np.any(grid <= 0.0):
        raise InvalidArgumentError("lambda grid must contain positive values")
    rng = np.random.default_rng(seed_sequence(seed, _CV_TAG))
    perm = rng.permutation(dataset.N)
    folds = np.array_split(perm, n_folds)

    candidates = []
    for lam in grid:
        try:
            candidates.append((float(lam), soft_threshold_std(fit.beta_ssl, float(lam))))
        except AllZeroError:
            continue
    if not candidates:
        fallback = float(np.sqrt(grid[0] * grid[-1]))
        warnings.warn(
            "every lambda_soft zeroed the estimate; falling back to the "
            f"geometric grid midpoint {fallback:g}",
            RuntimeWarning,
            stacklevel=2,
        )
        return fallback

    scores = np.zeros(len(candidates))
    for fold in folds:
        train = np.setdiff1d(np.arange(dataset.N), fold)
        G_train = fit_censoring(dataset.C[train])
        test = dataset.take(fold)
        for idx, (_, beta_std) in enumerate(candidates):
            total = 0.0
            for k in range(dataset.K):
                total += rank_correlation(test, k, beta_std, G_train).normalized
            scores[idx] += total / len(folds)
    best = int(np.argmax(scores))  # first max: smallest lambda on ties
    return candidates[best][0]


def _sd(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1)) if x.size > 1 else 0.0


@dataclass
class CoordinateInference:
    index: int
    estimate: float
    se: float
    ci_lower: float
    ci_upper: float
    p_value: float
    conservative: bool = False


@dataclass
class InferenceReport:
    """Per-coordinate estimates, intervals, and p-values from CI inversion."""

    method: str
    level: float
    coordinates: list[CoordinateInference] = field(default_factory=list)

    def to_json(self, path=None) -> str:
        payload = {
            "method": self.method,
            "level": self.level,
            "coordinates": [vars(c) for c in self.coordinates],
        }
        text = json.dumps(payload, indent=2)
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    def to_csv(self, path=None) -> str:
        lines = ["coord,est,se,ci_lower,ci_upper,pval,conservative"]
        for c in self.coordinates:
            lines.append(
                f"{c.index + 1},{c.estimate:.17g},{c.se:.17g},"
                f"{c.ci_lower:.17g},{c.ci_upper:.17g},{c.p_value:.4f},"
                f"{int(c.conservative)}"
            )
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def _pvalue_from_ci(ci_at, resolution: float = 1e-4) -> float:
    """Smallest alpha whose (1-alpha) interval excludes zero, by bisection."""

    def excluded(alpha: float) -> bool:
        lo, hi = ci_at(alpha)
        return not (lo <= 0.0 <= hi)

    lo_a, hi_a = resolution, 1.0
    if excluded(lo_a):
        return lo_a
    if not excluded(hi_a):
        return 1.0
    while hi_a - lo_a > resolution:
        mid = 0.5 * (lo_a + hi_a)
        if excluded(mid):
            hi_a = mid
        else:
            lo_a = mid
    return hi_a


def infer(
    fit: SslFit,
    replicates=None,
    regime: str | None = None,
    alpha: float = 0.05,
    *,
    lambda_soft: float | None = None,
    method: str | None = None,
) -> InferenceReport:
    """Build the per-coordinate inference report.

    The comparable regime uses re-centered quantile intervals of the raw
    replicates; the large-unlabeled regime soft-thresholds the point estimate
    and every replicate at the same level, re-centers preserving signs, and
    uses raw quantiles of the centered replicates. Coordinates thresholded
    to zero are flagged conservative (their intervals over-cover). ``method``
    overrides the regime-implied construction.
    """
    replicates = fit.replicates if replicates is None else np.asarray(replicates, dtype=float)
    if replicates is None:
        raise InvalidArgumentError("no replicates available for inference")
    regime = regime or fit.regime
    if method is None:
        method = "soft_std_quantile" if regime == "large_unlabeled" else "recentered_quantile"
    if method not in ("recentered_quantile", "soft_std_quantile"):
        raise InvalidArgumentError(f"unknown method {method!r}")
    if not 0.0 < alpha <= 1.0:
        raise InvalidArgumentError("alpha must lie in (0, 1]")
    if replicates.shape[0] < 20:
        raise InvalidArgumentError("need at least 20 replicates for interval estimation")
    p = fit.p
    report = InferenceReport(method=method, level=1.0 - alpha)

    if method == "recentered_quantile":
        point = fit.beta_ssl
        for j in range(p):
            ej = np.zeros(p)
            ej[j] = 1.0
            lo, hi = ci_recentered_quantile(replicates, point, ej, alpha)
            pv = _pvalue_from_ci(lambda a: ci_recentered_quantile(replicates, point, ej, a))
            report.coordinates.append(
                CoordinateInference(
                    index=j,
                    estimate=float(point[j]),
                    se=_sd(replicates[:, j]),
                    ci_lower=lo,
                    ci_upper=hi,
                    p_value=pv,
                )
            )
        return report

    lam = lambda_soft if lambda_soft is not None else fit.lambda_soft_used
    if lam is None:
        raise InvalidArgumentError(
            "soft_std_quantile needs lambda_soft (run cv_lambda_soft first)"
        )
    std_point = soft_threshold_std(fit.beta_ssl, lam)
    std_rows = []
    dropped = 0
    for row in replicates:
        try:
            std_rows.append(soft_threshold_std(row, lam))
        except AllZeroError:
            dropped += 1
    if dropped:
        warnings.warn(
            f"{dropped} replicate(s) zeroed out at lambda_soft={lam:g} and were dropped",
            RuntimeWarning,
            stacklevel=2,
        )
    std_reps = np.asarray(std_rows)
    if std_reps.shape[0] < 20:
        raise InvalidArgumentError("fewer than 20 usable replicates after thresholding")
    centered = recenter_sign_preserving(std_reps, std_point)
    for j in range(p):
        col = centered[:, j]
        lo = float(np.quantile(col, alpha / 2.0))
        hi = float(np.quantile(col, 1.0 - alpha / 2.0))

        def ci_at(a, col=col):
            return float(np.quantile(col, a / 2.0)), float(np.quantile(col, 1.0 - a / 2.0))

        report.coordinates.append(
            CoordinateInference(
                index=j,
                estimate=float(std_point[j]),
                se=_sd(std_reps[:, j]),
                ci_lower=lo,
                ci_upper=hi,
                p_value=_pvalue_from_ci(ci_at),
                conservative=bool(std_point[j] == 0.0),
            )
        )
    return report
