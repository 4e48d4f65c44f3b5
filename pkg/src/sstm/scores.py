"""Censoring survival, IPCW rank-correlation scores, and rank correlations.

The score for surrogate k at direction B is the ratio of two sums over all
ordered pairs (i, j), i != j:

    S_k(B) = sum (Z_i - Z_j) K_h(B'Z_i - B'Z_j) w_ij / sum w_ij,
    w_ij   = I(X_ki < X_kj) D_ki / G(X_ki)^2 * V_i * V_j,

where G is the (possibly perturbed) empirical censoring survival and the
perturbation weights V default to 1. Pair iteration is the package's hot
path: it runs as a serial compiled loop with a fixed accumulation order, so
results do not depend on thread or worker counts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from numba import njit

from .exceptions import (
    DegeneratePairsError,
    InvalidArgumentError,
    IpcwSingularityError,
)
from .kernels import BandwidthConfig, GaussianKernel

_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class CensoringSurvival:
    """Weighted empirical survival of follow-up: G(t) = sum w_i I(C_i >= t) / sum w_i."""

    times: np.ndarray
    suffix: np.ndarray
    total: float

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="left")
        out = self.suffix[idx] / self.total
        return float(out) if t.ndim == 0 else out


def fit_censoring(dataset, weights=None) -> CensoringSurvival:
    """Fit G over the full cohort; ``dataset`` may also be a raw array of C values."""
    C = dataset.C if hasattr(dataset, "C") else np.asarray(dataset, dtype=float)
    if C.size < 1:
        raise InvalidArgumentError("need at least one follow-up time")
    if weights is None:
        w = np.ones_like(C)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != C.shape:
            raise InvalidArgumentError("weights must align with follow-up times")
        if np.any(w <= 0.0) or not np.all(np.isfinite(w)):
            raise InvalidArgumentError("censoring weights must be positive and finite")
    order = np.argsort(C, kind="stable")
    times = C[order]
    wo = w[order]
    suffix = np.concatenate([np.cumsum(wo[::-1])[::-1], [0.0]])
    return CensoringSurvival(times=times, suffix=suffix, total=float(suffix[0]))


@njit(cache=True)
def _pair_accumulate_gauss(u, X, rho, V, inv_h, cut):  # pragma: no cover - compiled
    N = u.shape[0]
    r = np.zeros(N)
    c = np.zeros(N)
    den = 0.0
    qnum = 0.0
    kc = inv_h * _INV_SQRT2PI
    for i in range(N):
        ri = rho[i]
        if ri == 0.0:
            continue
        ui = u[i]
        xi = X[i]
        acc = 0.0
        for j in range(N):
            if xi < X[j]:
                w = V[j]
                den += ri * w
                du = ui - u[j]
                if du > 0.0:
                    qnum += ri * w
                adu = abs(du) * inv_h
                if adu < cut:
                    kv = np.exp(-0.5 * adu * adu) * kc
                    acc += kv * w
                    c[j] += kv * ri
        r[i] = acc
    return r, c, den, qnum


@njit(cache=True)
def _concordance_accumulate(u, X, rho, V):  # pragma: no cover - compiled
    N = u.shape[0]
    den = 0.0
    qnum = 0.0
    for i in range(N):
        ri = rho[i]
        if ri == 0.0:
            continue
        ui = u[i]
        xi = X[i]
        for j in range(N):
            if xi < X[j]:
                w = ri * V[j]
                den += w
                if ui > u[j]:
                    qnum += w
    return den, qnum


def _pair_stats_generic(Z, u, X, rho, V, kernel, h, tile=512):
    """Tiled fallback for kernels other than the built-in gaussian."""
    N = u.size
    r = np.zeros(N)
    c = np.zeros(N)
    den = 0.0
    qnum = 0.0
    for s in range(0, N, tile):
        e = min(s + tile, N)
        du = u[s:e, None] - u[None, :]
        cmp = (X[s:e, None] < X[None, :]).astype(float)
        kv = kernel.evaluate(du / h) / h
        M = kv * cmp
        r[s:e] = M @ V
        c += rho[s:e] @ M
        den += float(rho[s:e] @ (cmp @ V))
        qnum += float(rho[s:e] @ (((du > 0.0) & (cmp > 0.0)).astype(float) @ V))
    return r, c, den, qnum


def _colsum(mat: np.ndarray) -> np.ndarray:
    return mat.sum(axis=0)


def _score_stats(dataset, k, u, kernel, h, G, V, g_min, kernel_cutoff):
    X = np.ascontiguousarray(dataset.X[:, k])
    dlt = dataset.Dlt[:, k]
    Gx = G.evaluate(X)
    uncensored = dlt == 1
    if np.any(uncensored):
        contributing = uncensored & (X < X.max())
        if np.any(contributing & (Gx <= g_min)):
            raise IpcwSingularityError(
                f"surrogate {k}: censoring survival <= {g_min:g} at a contributing event time"
            )
    rho = np.where(uncensored, 1.0 / np.maximum(Gx, 1e-300) ** 2, 0.0)
    # pair weight is I(X_i < X_j) * rho_i * V_i * V_j: V_i rides on the row factor
    rho_row = np.ascontiguousarray(rho * V)
    u = np.ascontiguousarray(u)
    V = np.ascontiguousarray(V)
    if getattr(kernel, "family", None) == "gaussian":
        r, c, den, qnum = _pair_accumulate_gauss(u, X, rho_row, V, 1.0 / h, kernel_cutoff)
    else:
        r, c, den, qnum = _pair_stats_generic(dataset.Z, u, X, rho_row, V, kernel, h)
    num = _colsum(dataset.Z * (rho_row * r - V * c)[:, None])
    return num, den, qnum


def _check_direction(Bdir, p):
    Bdir = np.asarray(Bdir, dtype=float)
    if Bdir.shape != (p,):
        raise InvalidArgumentError(f"direction must have length p={p}")
    nrm = float(np.linalg.norm(Bdir))
    if abs(nrm - 1.0) > 1e-6:
        raise InvalidArgumentError(f"direction must have unit euclidean norm, got {nrm:.6g}")
    return Bdir


def _check_weights(dataset, weights):
    if weights is None:
        return np.ones(dataset.N)
    V = np.asarray(weights, dtype=float)
    if V.shape != (dataset.N,):
        raise InvalidArgumentError(f"weights must have length N={dataset.N}")
    if np.any(V <= 0.0) or not np.all(np.isfinite(V)):
        raise InvalidArgumentError("perturbation weights must be positive and finite")
    return V


def smoothed_score(
    dataset,
    k: int,
    Bdir,
    kernel=None,
    bw: BandwidthConfig | None = None,
    G: CensoringSurvival | None = None,
    weights=None,
    *,
    g_min: float = 0.0,
    kernel_cutoff: float = 10.0,
) -> np.ndarray:
    """Smoothed IPCW rank-correlation score for surrogate ``k`` at ``Bdir``.

    ``kernel_cutoff`` drops kernel terms beyond ``cutoff * h`` in index
    distance; at the default the omitted mass is below 2e-22 relative.
    Raises DegeneratePairsError when no comparable pairs exist and
    IpcwSingularityError when a contributing pair has G below ``g_min``.
    """
    kernel = kernel or GaussianKernel()
    if not 0 <= k < dataset.K:
        raise InvalidArgumentError(f"surrogate index {k} outside 0..{dataset.K - 1}")
    Bdir = _check_direction(Bdir, dataset.p)
    if bw is None or bw.h_score is None:
        raise InvalidArgumentError("bw.h_score is required for score evaluation")
    V = _check_weights(dataset, weights)
    if G is None:
        G = fit_censoring(dataset, weights)
    u = dataset.Z @ Bdir
    num, den, _ = _score_stats(dataset, k, u, kernel, float(bw.h_score[k]), G, V, g_min, kernel_cutoff)
    if den <= 0.0:
        raise DegeneratePairsError(f"surrogate {k}: no comparable pairs")
    return num / den


@dataclass(frozen=True)
class ScoreBundle:
    """Stacked per-surrogate scores at one direction, plus rank correlations."""

    S: np.ndarray
    Q: np.ndarray
    denominators: np.ndarray
    bandwidths: np.ndarray

    @property
    def K(self) -> int:
        return self.Q.size

    def block(self, k: int) -> np.ndarray:
        p = self.S.size // self.K
        return self.S[k * p : (k + 1) * p]

    def to_json(self, path=None) -> str:
        payload = {
            "S": self.S.tolist(),
            "Q": self.Q.tolist(),
            "denominators": self.denominators.tolist(),
            "bandwidths": self.bandwidths.tolist(),
        }
        text = json.dumps(payload, indent=2)
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def stacked_score(
    dataset,
    Bdir,
    kernel=None,
    bw: BandwidthConfig | None = None,
    weights=None,
    *,
    g_min: float = 0.0,
    kernel_cutoff: float = 10.0,
) -> ScoreBundle:
    """Concatenate the per-surrogate scores at one direction.

    The censoring survival is fitted once over the full cohort with the same
    weights and shared across surrogates.
    """
    kernel = kernel or GaussianKernel()
    Bdir = _check_direction(Bdir, dataset.p)
    if bw is None or bw.h_score is None:
        raise InvalidArgumentError("bw.h_score is required for score evaluation")
    if bw.h_score.size != dataset.K:
        raise InvalidArgumentError("bw.h_score must have one bandwidth per surrogate")
    V = _check_weights(dataset, weights)
    G = fit_censoring(dataset, weights)
    u = dataset.Z @ Bdir
    blocks = []
    qs = []
    dens = []
    for k in range(dataset.K):
        num, den, qnum = _score_stats(
            dataset, k, u, kernel, float(bw.h_score[k]), G, V, g_min, kernel_cutoff
        )
        if den <= 0.0:
            raise DegeneratePairsError(f"surrogate {k}: no comparable pairs")
        blocks.append(num / den)
        qs.append(qnum / den)
        dens.append(den)
    return ScoreBundle(
        S=np.concatenate(blocks),
        Q=np.asarray(qs),
        denominators=np.asarray(dens),
        bandwidths=bw.h_score.copy(),
    )


class RankCorrelation(NamedTuple):
    """Raw N**-2 pair sum and its normalized (ratio) form."""

    raw: float
    normalized: float


def rank_correlation(dataset, k: int, beta, G: CensoringSurvival | None = None, weights=None) -> RankCorrelation:
    """IPCW rank correlation of surrogate ``k`` with the index ``beta'Z``.

    ``beta`` need not be normalized: both forms depend on it only through
    the ordering of beta'Z, so they are exactly invariant to positive
    rescaling.
    """
    if not 0 <= k < dataset.K:
        raise InvalidArgumentError(f"surrogate index {k} outside 0..{dataset.K - 1}")
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (dataset.p,):
        raise InvalidArgumentError(f"beta must have length p={dataset.p}")
    V = _check_weights(dataset, weights)
    if G is None:
        G = fit_censoring(dataset, weights)
    X = np.ascontiguousarray(dataset.X[:, k])
    Gx = G.evaluate(X)
    rho = np.where(dataset.Dlt[:, k] == 1, 1.0 / np.maximum(Gx, 1e-300) ** 2, 0.0)
    rho_row = np.ascontiguousarray(rho * V)
    u = np.ascontiguousarray(dataset.Z @ beta)
    den, qnum = _concordance_accumulate(u, X, rho_row, np.ascontiguousarray(V))
    raw = qnum / dataset.N**2
    if den <= 0.0:
        raise DegeneratePairsError(f"surrogate {k}: no comparable pairs")
    return RankCorrelation(raw=raw, normalized=qnum / den)
