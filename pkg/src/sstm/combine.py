"""Projection matrices, perturbation draws, and the combined estimator.

The stacked score is asymptotically collinear along the fitted direction, so
each use drops one coordinate: either coordinate j within every surrogate
block (comparable regime) or block k minus coordinate j (large-unlabeled
regime). Combination weights are estimated by regressing perturbed initial
estimates on the projected perturbed scores.
"""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._seeds import seed_sequence
from .exceptions import InvalidArgumentError, SstmError
from .inference import SslFit
from .kernels import BandwidthConfig, GaussianKernel, Link
from .scores import ScoreBundle, stacked_score
from .supervised import SupervisedFit, fit_supervised

logger = logging.getLogger(__name__)

_PERT_TAG = 0x9B0B5


@dataclass(frozen=True)
class Projection:
    """0/1 selection matrix dropping one score coordinate.

    ``drop_j`` removes coordinate j inside every surrogate block, shape
    K(p-1) x Kp; ``keep_k_drop_j`` keeps block k without coordinate j, shape
    (p-1) x Kp. Indices are 0-based.
    """

    kind: str
    j: int
    k: int | None
    matrix: np.ndarray

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]


def build_projection(kind: str, p: int, K: int, j: int, k: int | None = None) -> Projection:
    if p < 2 or K < 1:
        raise InvalidArgumentError("need p >= 2 and K >= 1")
    if not 0 <= j < p:
        raise InvalidArgumentError(f"coordinate j={j} outside 0..{p - 1}")
    eye_del = np.delete(np.eye(p), j, axis=0)
    if kind == "drop_j":
        mat = np.kron(np.eye(K), eye_del)
        kk = None
    elif kind == "keep_k_drop_j":
        if k is None or not 0 <= k < K:
            raise InvalidArgumentError(f"surrogate k={k} outside 0..{K - 1}")
        mat = np.zeros((p - 1, K * p))
        mat[:, k * p : (k + 1) * p] = eye_del
        kk = int(k)
    else:
        raise InvalidArgumentError(f"unknown projection kind {kind!r}")
    mat.setflags(write=False)
    return Projection(kind=kind, j=int(j), k=kk, matrix=mat)


def regime_projections(regime: str, p: int, K: int, support) -> list[Projection]:
    """The projection family a regime prescribes, one per supported index
    (and per surrogate in the large-unlabeled regime)."""
    support = sorted(int(j) for j in support)
    if not support:
        raise InvalidArgumentError("support must be nonempty")
    if regime == "comparable":
        return [build_projection("drop_j", p, K, j) for j in support]
    if regime == "large_unlabeled":
        return [
            build_projection("keep_k_drop_j", p, K, j, k)
            for k in range(K)
            for j in support
        ]
    raise InvalidArgumentError(f"unknown regime {regime!r}")


@dataclass
class PerturbationDraw:
    """One resampling replicate: weights, perturbed fit, perturbed score."""

    b: int
    V: np.ndarray | None
    beta_delta: np.ndarray
    score: np.ndarray
    Q: np.ndarray
    beta_ssl: np.ndarray | None = None


def _draw_weights(rng, N: int, law: str) -> np.ndarray:
    if law == "exp1":
        return rng.exponential(1.0, N)
    if law == "ones":
        return np.ones(N)
    raise InvalidArgumentError(f"unknown weight law {law!r}; expected 'exp1' or 'ones'")


def _one_draw(dataset, link, kernel, bw, seed_key, b, weight_law, warm, g_min, kernel_cutoff, keep_v):
    rng = np.random.default_rng(seed_key)
    V = _draw_weights(rng, dataset.N, weight_law)
    fit_b = fit_supervised(dataset, link, kernel, bw, weights=V, init=warm)
    nrm = float(np.linalg.norm(fit_b.beta))
    if nrm <= 0.0:
        raise SstmError("perturbed fit collapsed to the zero vector")
    bundle = stacked_score(
        dataset, fit_b.beta / nrm, kernel, bw, weights=V,
        g_min=g_min, kernel_cutoff=kernel_cutoff,
    )
    return PerturbationDraw(
        b=b,
        V=V if keep_v else None,
        beta_delta=fit_b.beta,
        score=bundle.S,
        Q=bundle.Q,
    )


def _draw_task(args):
    (dataset, link_family, bw, seed_key, b, weight_law, warm, g_min, cutoff, keep_v) = args
    try:
        return b, _one_draw(
            dataset, Link(link_family), GaussianKernel(), bw, seed_key, b,
            weight_law, warm, g_min, cutoff, keep_v,
        ), None
    except SstmError as exc:
        return b, None, str(exc)


def run_perturbations(
    dataset,
    link: Link,
    kernel=None,
    bw: BandwidthConfig | None = None,
    B: int = 200,
    seed: int = 0,
    *,
    weight_law: str = "exp1",
    warm_start: SupervisedFit | None = None,
    n_jobs: int = 1,
    g_min: float = 0.0,
    kernel_cutoff: float = 10.0,
    keep_weights: bool = True,
    cache_dir=None,
    max_failure_rate: float = 0.1,
) -> list[PerturbationDraw]:
    """Draw B perturbation replicates of (beta_delta, stacked score).

    Weights are iid with unit mean and variance (Exp(1) by default; ``ones``
    reproduces the unperturbed fit and exists for testing). Replicates use
    independent per-b substreams of ``seed``, so results do not depend on
    execution order or ``n_jobs``. Failed replicates are dropped; more than
    ``max_failure_rate`` of them aborts.

    With ``cache_dir`` set, draws are spilled to an ``.npz`` keyed by the
    dataset content, seed, B, and weight law, and reloaded when present.
    """
    kernel = kernel or GaussianKernel()
    if B < 2:
        raise InvalidArgumentError("need at least B=2 perturbation draws")
    if bw is None or bw.h_score is None:
        raise InvalidArgumentError("bw with per-surrogate h_score is required")

    cache_path = None
    if cache_dir is not None:
        key = hashlib.sha256(
            f"{dataset.content_hash()}|{seed}|{B}|{weight_law}".encode()
        ).hexdigest()[:16]
        cache_path = Path(cache_dir) / f"draws_{key}.npz"
        if cache_path.exists():
            return load_draws(cache_path)

    warm = None
    if warm_start is not None:
        warm = (warm_start.beta, (warm_start.grid, warm_start.h_values))

    tasks = [
        (
            dataset, link.family, bw, seed_sequence(seed, _PERT_TAG, b), b, weight_law,
            warm, g_min, kernel_cutoff, keep_weights,
        )
        for b in range(B)
    ]
    results: list[tuple[int, PerturbationDraw | None, str | None]] = []
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_draw_task, tasks, chunksize=max(1, B // (4 * n_jobs))))
    else:
        results = [_draw_task(t) for t in tasks]

    draws: list[PerturbationDraw] = []
    failures = 0
    for b, draw, err in sorted(results, key=lambda r: r[0]):
        if draw is None:
            failures += 1
            logger.warning("perturbation draw %d failed: %s", b, err)
        else:
            draws.append(draw)
    if failures > max_failure_rate * B:
        raise SstmError(
            f"{failures}/{B} perturbation draws failed (> {max_failure_rate:.0%} allowed)"
        )
    if cache_path is not None:
        save_draws(draws, cache_path)
    return draws


def save_draws(draws: list[PerturbationDraw], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    b_idx = np.array([d.b for d in draws], dtype=np.int64)
    have_v = all(d.V is not None for d in draws)
    np.savez_compressed(
        path,
        b=b_idx,
        beta_delta=np.array([d.beta_delta for d in draws]),
        score=np.array([d.score for d in draws]),
        Q=np.array([d.Q for d in draws]),
        V=np.array([d.V for d in draws]) if have_v else np.zeros((0, 0)),
    )


def load_draws(path) -> list[PerturbationDraw]:
    with np.load(Path(path)) as data:
        b_idx = data["b"]
        beta = data["beta_delta"]
        score = data["score"]
        Q = data["Q"]
        V = data["V"] if data["V"].size else None
        return [
            PerturbationDraw(
                b=int(b_idx[i]),
                V=None if V is None else V[i],
                beta_delta=beta[i],
                score=score[i],
                Q=Q[i],
            )
            for i in range(b_idx.size)
        ]


@dataclass
class CombinationWeights:
    """Estimated combination matrix and per-projection diagnostics.

    ``W_comb`` has shape Kp x p; the combined estimator subtracts
    ``W_comb.T @ S`` from the initial estimate. ``ranks`` records the
    numerical rank of each projected Gram matrix; deficient projections are
    solved on their identified column space.
    """

    W_comb: np.ndarray
    projections: list[Projection]
    coefficients: list[np.ndarray]
    ranks: list[int]
    rank_deficient: bool

    def to_json(self, path=None) -> str:
        import json

        payload = {
            "W_comb": self.W_comb.tolist(),
            "ranks": self.ranks,
            "rank_deficient": self.rank_deficient,
            "projections": [
                {"kind": pr.kind, "j": pr.j, "k": pr.k} for pr in self.projections
            ],
        }
        text = json.dumps(payload, indent=2)
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def estimate_weights(
    draws: list[PerturbationDraw],
    projections: list[Projection],
    support,
    *,
    rcond: float = 1e-10,
) -> CombinationWeights:
    """Least-squares combination weights from perturbation draws.

    For each projection P and target coordinate j, solves the least-squares
    problem

        w_j(P) = argmin_{w0, w} (1/B) sum_b (beta_delta_j^(b) - w0 - w' P S^(b))^2

    through the normal equations (on centered moments, which is the same
    thing) with a pseudo-inverse at relative tolerance ``rcond``. The slope
    is the sample Var(P S^(b))^-1 Cov(P S^(b), beta_j^(b)), the plug-in for
    the optimal combination; a regression through the origin would instead
    let the propagated draw means eat a constant fraction of the estimate.
    Averages the per-projection matrices over the provided projections.
    """
    if not projections:
        raise InvalidArgumentError("need at least one projection")
    kinds = {pr.kind for pr in projections}
    if len(kinds) != 1:
        raise InvalidArgumentError("projections must all share one kind")
    support = sorted(int(j) for j in support)
    if not support:
        raise InvalidArgumentError("support must be nonempty")
    S = np.array([d.score for d in draws])
    Beta = np.array([d.beta_delta for d in draws])
    B, kp = S.shape
    p = Beta.shape[1]
    if B < p + 1:
        raise InvalidArgumentError(f"need at least p+1={p + 1} usable draws, got {B}")

    Sc = S - S.mean(axis=0)
    Bc = Beta - Beta.mean(axis=0)
    M = Sc.T @ Sc / B
    Cmat = Sc.T @ Bc / B

    W_comb_T = np.zeros((p, kp))
    coefficients = []
    ranks = []
    for pr in projections:
        P = pr.matrix
        G = P @ M @ P.T
        sv = np.linalg.svd(G, compute_uv=False)
        rank = int(np.sum(sv > rcond * sv[0])) if sv.size and sv[0] > 0 else 0
        ranks.append(rank)
        Ginv = np.linalg.pinv(G, rcond=rcond, hermitian=True)
        A = Ginv @ (P @ Cmat)  # r x p, columns are w_j(P)
        coefficients.append(A)
        W_comb_T += A.T @ P
    W_comb_T /= len(projections)
    rank_deficient = any(r < pr.rows for r, pr in zip(ranks, projections))
    if rank_deficient:
        logger.warning(
            "rank-deficient projected Gram matrices (ranks %s); weights solved on the column space",
            ranks,
        )
    return CombinationWeights(
        W_comb=W_comb_T.T,
        projections=list(projections),
        coefficients=coefficients,
        ranks=ranks,
        rank_deficient=rank_deficient,
    )


def combine(fit: SupervisedFit, bundle: ScoreBundle, W: CombinationWeights, regime: str = "comparable") -> SslFit:
    """Combined estimator: beta_ssl = beta_delta - W_comb' S(beta_delta)."""
    S = bundle.S
    if W.W_comb.shape != (S.size, fit.beta.size):
        raise InvalidArgumentError(
            f"weight matrix shape {W.W_comb.shape} does not match (Kp={S.size}, p={fit.beta.size})"
        )
    beta_ssl = fit.beta - W.W_comb.T @ S
    return SslFit(
        beta_ssl=beta_ssl,
        beta_delta=fit.beta.copy(),
        regime=regime,
        replicates=None,
    )
