"""Initial estimator from labeled current-status data.

Solves the coupled estimating equations

    sum_i V_i [Z_i - b(C_i)] [delta_i - g{h(C_i) + beta' Z_i}]  = 0     (p eqns)
    sum_i V_i K_h(C_i - t) [delta_i - g{h(t) + beta' Z_i}]      = 0     (one per
                                                        distinct labeled C)

where b(t) is the local g'-weighted covariate mean

    b(t) = sum_i V_i K_h(C_i - t) g'{h(t) + beta'Z_i} Z_i
           / sum_i V_i K_h(C_i - t) g'{h(t) + beta'Z_i},

i.e. the profile score of the fully iterated quasi-likelihood problem. The
centering makes the solution exactly equivariant under covariate location
shifts (h absorbs them); an uncentered first block would be off by the
finite-sample mean residual. Solved by backfitting: a vectorized 1-D Newton
per grid point for h, alternating with a damped Newton step on beta. The
perturbation weights V default to 1.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import (
    ConvergenceError,
    DegenerateDataError,
    DegenerateSupportError,
    GridRangeError,
    InvalidArgumentError,
)
from .kernels import BandwidthConfig, GaussianKernel, Link


@dataclass(frozen=True)
class ThresholdConfig:
    """Thresholds for support recovery and soft-threshold inference.

    ``lambda_delta`` defaults to n**-0.25 at the point of use.
    """

    lambda_delta: float | None = None
    lambda_soft: float | None = None

    def __post_init__(self):
        if self.lambda_delta is not None and self.lambda_delta <= 0.0:
            raise InvalidArgumentError("lambda_delta must be positive")
        if self.lambda_soft is not None and self.lambda_soft <= 0.0:
            raise InvalidArgumentError("lambda_soft must be positive")


@dataclass
class SupervisedFit:
    """Solution of the labeled-data estimating equations."""

    beta: np.ndarray
    grid: np.ndarray
    h_values: np.ndarray
    support: tuple[int, ...]
    converged: bool
    iterations: int
    residual_norm: float
    clamped: np.ndarray
    link_family: str
    bandwidth: float
    lambda_delta: float
    n_labeled: int

    @property
    def h_grid(self) -> list[tuple[float, float]]:
        return list(zip(self.grid.tolist(), self.h_values.tolist()))

    def to_json(self, path=None) -> str:
        payload = {
            "beta": self.beta.tolist(),
            "grid": self.grid.tolist(),
            "h_values": self.h_values.tolist(),
            "support": list(self.support),
            "converged": self.converged,
            "iterations": self.iterations,
            "residual_norm": self.residual_norm,
            "clamped": self.clamped.astype(int).tolist(),
            "link_family": self.link_family,
            "bandwidth": self.bandwidth,
            "lambda_delta": self.lambda_delta,
            "n_labeled": self.n_labeled,
        }
        text = json.dumps(payload, indent=2)
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_json(cls, text_or_path) -> "SupervisedFit":
        text = str(text_or_path)
        if not text.lstrip().startswith("{"):
            text = Path(text).read_text(encoding="utf-8")
        d = json.loads(text)
        return cls(
            beta=np.asarray(d["beta"], dtype=float),
            grid=np.asarray(d["grid"], dtype=float),
            h_values=np.asarray(d["h_values"], dtype=float),
            support=tuple(d["support"]),
            converged=bool(d["converged"]),
            iterations=int(d["iterations"]),
            residual_norm=float(d["residual_norm"]),
            clamped=np.asarray(d["clamped"], dtype=bool),
            link_family=d["link_family"],
            bandwidth=float(d["bandwidth"]),
            lambda_delta=float(d["lambda_delta"]),
            n_labeled=int(d["n_labeled"]),
        )


def _labeled_arrays(dataset):
    lab = dataset.labeled
    return dataset.C[lab], dataset.Z[lab], dataset.delta[lab]


def _colsum(mat: np.ndarray) -> np.ndarray:
    # np.sum uses fixed pairwise blocking: deterministic regardless of BLAS.
    return mat.sum(axis=0)


class _System:
    """Workspace for one solve; holds the fixed kernel weight matrix."""

    def __init__(self, C, Z, delta, V, link: Link, h: float, kernel, h_clamp: float):
        self.n, self.p = Z.shape
        self.Z = Z
        self.delta = delta
        self.V = V
        self.link = link
        self.h_clamp = h_clamp
        self.grid, self.gidx = np.unique(C, return_inverse=True)
        diff = (C[None, :] - self.grid[:, None]) / h
        self.Wv = (kernel.evaluate(diff) / h) * V[None, :]
        self.s1 = self.Wv @ delta
        self.row_tot = self.Wv.sum(axis=1)

    def init_state(self):
        pbar = np.clip(self.s1 / self.row_tot, 0.01, 0.99)
        h0 = np.clip(self.link.ginv(pbar), -self.h_clamp, self.h_clamp)
        return np.zeros(self.p), h0

    def solve_h(self, u, h_val, tol_sum, max_iter=100):
        """Per-grid-point Newton for h with beta'Z = u held fixed."""
        h_val = h_val.copy()
        for _ in range(max_iter):
            eta = h_val[:, None] + u[None, :]
            f = self.s1 - np.einsum("ji,ji->j", self.Wv, self.link.g(eta))
            if np.max(np.abs(f)) < tol_sum:
                break
            fp = np.einsum("ji,ji->j", self.Wv, self.link.gprime(eta))
            step = np.clip(f / np.maximum(fp, 1e-300), -4.0, 4.0)
            h_val = np.clip(h_val + step, -self.h_clamp, self.h_clamp)
        return h_val, f

    def profile_state(self, u, h_val, f_grid):
        """Centered first-block residual, joint residual, and Jacobian pieces
        at the current (beta'Z, h)."""
        eta = h_val[:, None] + u[None, :]
        gp = self.link.gprime(eta)
        WG = self.Wv * gp
        denb = np.maximum(WG.sum(axis=1), 1e-300)
        Bmat = (WG @ self.Z) / denb[:, None]
        Zc = self.Z - Bmat[self.gidx]
        resid = self.delta - self.link.g(h_val[self.gidx] + u)
        r1 = _colsum(Zc * (self.V * resid)[:, None]) / self.n
        joint = max(float(np.max(np.abs(r1))), float(np.max(np.abs(f_grid))) / self.n)
        gpi = gp[self.gidx, np.arange(self.n)]
        return joint, r1, Zc, gpi

    def profile_jacobian(self, Zc, gpi):
        # dh/dbeta = -b(t), so d eta_i / d beta = Z_i - b(C_i): the Jacobian
        # is the negative profile information, symmetric and stable.
        return -(Zc * (self.V * gpi)[:, None]).T @ Zc / self.n

    def inner_tol(self, joint, tol_sum):
        # inexact inner solves while far from the joint solution
        if not np.isfinite(joint):
            return tol_sum
        return max(tol_sum, 1e-4 * joint * self.n)


def _solve(C, Z, delta, V, link, h, kernel, *, tol, max_sweeps, h_clamp, max_halvings, init=None):
    sys_ = _System(C, Z, delta, V, link, h, kernel, h_clamp)
    n = sys_.n
    if init is None:
        beta, h_val = sys_.init_state()
    else:
        beta = np.asarray(init[0], dtype=float).copy()
        h_val = np.interp(sys_.grid, np.asarray(init[1][0]), np.asarray(init[1][1]))
        h_val = np.clip(h_val, -h_clamp, h_clamp)
    tol_sum = 0.3 * tol * n

    u = Z @ beta
    h_val, f_grid = sys_.solve_h(u, h_val, tol_sum)
    joint, r1, Zc, gpi = sys_.profile_state(u, h_val, f_grid)
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        if joint < tol:
            break
        J = sys_.profile_jacobian(Zc, gpi)
        accepted = None
        # plain Newton with halving first; on stall, retry with increasing
        # curvature regularization (J is symmetric negative definite)
        for mu in (0.0, 1e-4, 1e-2, 1.0):
            Jr = J if mu == 0.0 else J - mu * np.eye(sys_.p)
            try:
                step = np.linalg.solve(Jr, -r1)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(Jr, -r1, rcond=None)[0]
            inner = sys_.inner_tol(joint, tol_sum)
            scale = 1.0
            for _ in range(max_halvings + 1):
                beta_try = beta + scale * step
                u_try = Z @ beta_try
                h_try, f_try = sys_.solve_h(u_try, h_val, inner)
                state_try = sys_.profile_state(u_try, h_try, f_try)
                if state_try[0] < joint:
                    accepted = (beta_try, u_try, h_try, f_try, state_try)
                    break
                scale *= 0.5
            if accepted is not None:
                break
        if accepted is None:
            # no direction improved: report non-convergence from here
            break
        beta, u, h_val, f_grid, (joint, r1, Zc, gpi) = accepted
        if joint < tol and np.max(np.abs(f_grid)) >= tol_sum:
            # the accepted state came from a loose inner solve: tighten once
            h_val, f_grid = sys_.solve_h(u, h_val, tol_sum)
            joint, r1, Zc, gpi = sys_.profile_state(u, h_val, f_grid)

    converged = joint < tol
    if converged and np.max(np.abs(f_grid)) >= tol_sum:
        h_val, f_grid = sys_.solve_h(u, h_val, tol_sum)
        joint, r1, Zc, gpi = sys_.profile_state(u, h_val, f_grid)
        converged = joint < tol
    clamped = np.abs(h_val) >= h_clamp - 1e-9
    return beta, sys_.grid, h_val, converged, sweeps, joint, clamped


def fit_supervised(
    dataset,
    link: Link,
    kernel=None,
    bw: BandwidthConfig | None = None,
    *,
    weights=None,
    threshold: ThresholdConfig | None = None,
    tol: float = 1e-8,
    max_sweeps: int = 200,
    h_clamp: float = 30.0,
    max_halvings: int = 30,
    init=None,
    on_failure: str = "raise",
) -> SupervisedFit:
    """Fit (beta, h) from the labeled subset.

    ``bw`` defaults to the data-driven supervised bandwidth. ``weights``
    multiplies each subject's contribution to both equation blocks (the
    perturbed variant); it may have length n (labeled rows, in row order)
    or length N. ``init`` warm-starts from ``(beta, (grid, h_values))``.

    Raises DegenerateDataError when the labeled deltas are all equal and
    ConvergenceError (carrying the last iterate) when ``max_sweeps`` is
    exhausted; pass ``on_failure="return"`` to get the unconverged fit
    instead.
    """
    kernel = kernel or GaussianKernel()
    C, Z, delta = _labeled_arrays(dataset)
    n, p = Z.shape
    if n < 2 or p < 1:
        raise DegenerateDataError("need at least two labeled subjects and one covariate")
    if delta.min() == delta.max():
        raise DegenerateDataError("labeled current-status outcomes are all equal")

    if weights is None:
        V = np.ones(n)
    else:
        V = np.asarray(weights, dtype=float)
        if V.shape == (dataset.N,):
            V = V[dataset.labeled]
        if V.shape != (n,):
            raise InvalidArgumentError(f"weights must have length n={n} or N={dataset.N}")
        if not np.all(np.isfinite(V)) or np.any(V <= 0.0):
            raise InvalidArgumentError("perturbation weights must be positive and finite")

    if bw is None:
        from .kernels import supervised_bandwidth

        h = supervised_bandwidth(dataset)
    else:
        h = bw.h_supervised

    beta, grid, h_val, converged, sweeps, joint, clamped = _solve(
        C, Z, delta, V, link, h, kernel,
        tol=tol, max_sweeps=max_sweeps, h_clamp=h_clamp, max_halvings=max_halvings,
        init=init,
    )

    threshold = threshold or ThresholdConfig()
    lam = threshold.lambda_delta if threshold.lambda_delta is not None else n ** -0.25
    support = tuple(int(j) for j in np.flatnonzero(np.abs(beta) > lam))

    fit = SupervisedFit(
        beta=beta,
        grid=grid,
        h_values=h_val,
        support=support,
        converged=converged,
        iterations=sweeps,
        residual_norm=joint,
        clamped=clamped,
        link_family=link.family,
        bandwidth=h,
        lambda_delta=lam,
        n_labeled=n,
    )
    if np.any(clamped):
        warnings.warn(
            f"{int(clamped.sum())} grid point(s) hit the h clamp at +/-{h_clamp}",
            RuntimeWarning,
            stacklevel=2,
        )
    if not converged:
        if on_failure == "return":
            return fit
        raise ConvergenceError(
            f"estimating equations not solved after {max_sweeps} sweeps "
            f"(residual {joint:.3e} > tol {tol:.1e})",
            fit=fit,
        )
    return fit


def fit_supervised_perturbed(dataset, link, kernel, bw, weights, **opts) -> SupervisedFit:
    """Weighted variant: every summand of both blocks is multiplied by V_i."""
    weights = np.asarray(weights, dtype=float)
    return fit_supervised(dataset, link, kernel, bw, weights=weights, **opts)


def _isotonic_nondecreasing(y: np.ndarray) -> np.ndarray:
    """L2 projection onto nondecreasing sequences (pool adjacent violators)."""
    vals: list[float] = []
    counts: list[int] = []
    for v in np.asarray(y, dtype=float):
        vals.append(float(v))
        counts.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            tot = vals[-1] * counts[-1] + vals[-2] * counts[-2]
            cnt = counts[-1] + counts[-2]
            vals.pop()
            counts.pop()
            vals[-1] = tot / cnt
            counts[-1] = cnt
    return np.repeat(vals, counts)


def predict_risk(fit: SupervisedFit, link: Link, t, z, *, isotonic: bool = False):
    """g(h(t) + beta'z) with h linearly interpolated on the fitted grid.

    ``t`` must lie inside [min grid, max grid]; pass ``isotonic=True`` to
    project the h values onto nondecreasing sequences first.
    """
    t_arr = np.asarray(t, dtype=float)
    lo, hi = fit.grid[0], fit.grid[-1]
    if np.any(t_arr < lo) or np.any(t_arr > hi):
        raise GridRangeError(f"t outside fitted grid [{lo:g}, {hi:g}]")
    hvals = _isotonic_nondecreasing(fit.h_values) if isotonic else fit.h_values
    h_at_t = np.interp(t_arr, fit.grid, hvals)
    z = np.asarray(z, dtype=float)
    out = link.g(h_at_t + float(z @ fit.beta))
    return float(out) if np.ndim(t) == 0 else out


def recover_support(fit: SupervisedFit, config: ThresholdConfig | None = None) -> tuple[int, ...]:
    """Indices with |beta_j| above the threshold (default n**-0.25).

    Raises DegenerateSupportError when nothing survives: the downstream
    combination needs at least one index.
    """
    lam = fit.n_labeled ** -0.25
    if config is not None and config.lambda_delta is not None:
        lam = config.lambda_delta
    support = tuple(int(j) for j in np.flatnonzero(np.abs(fit.beta) > lam))
    if not support:
        raise DegenerateSupportError(f"no coordinate exceeds lambda_delta={lam:.4g}")
    return support
