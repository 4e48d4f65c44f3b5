"""Independent brute-force reference implementations shared by test modules.

Everything here is written as literal loops over ordered pairs, kept free of
the vectorized/compiled code paths it checks.
"""

import numpy as np

from sstm import Dataset


def censoring_survival(C, t, weights=None):
    w = np.ones_like(C) if weights is None else weights
    return np.sum(w * (C >= t)) / np.sum(w)


def smoothed_score(ds, k, Bdir, h, G, V=None):
    """Quadruple-loop score ratio for surrogate k at direction Bdir."""
    N, p = ds.N, ds.p
    V = np.ones(N) if V is None else V
    u = ds.Z @ Bdir
    num = np.zeros(p)
    den = 0.0
    for i in range(N):
        for j in range(N):
            if i == j:
                continue
            if ds.Dlt[i, k] == 1 and ds.X[i, k] < ds.X[j, k]:
                w = V[i] * V[j] / G.evaluate(ds.X[i, k]) ** 2
                kv = np.exp(-0.5 * ((u[i] - u[j]) / h) ** 2) / (h * np.sqrt(2 * np.pi))
                num += (ds.Z[i] - ds.Z[j]) * kv * w
                den += w
    return num / den


def rank_correlation(ds, k, beta, G, V=None):
    """Raw and normalized IPCW rank correlation by explicit double loop."""
    N = ds.N
    V = np.ones(N) if V is None else V
    u = ds.Z @ beta
    qnum = 0.0
    den = 0.0
    for i in range(N):
        for j in range(N):
            if i == j:
                continue
            if ds.Dlt[i, k] == 1 and ds.X[i, k] < ds.X[j, k]:
                w = V[i] * V[j] / G.evaluate(ds.X[i, k]) ** 2
                den += w
                if u[i] > u[j]:
                    qnum += w
    return qnum / N**2, qnum / den


def random_cohort(seed, N=30, p=3, K=2):
    rng = np.random.default_rng(seed)
    C = rng.uniform(0.5, 4.0, N)
    Z = rng.normal(size=(N, p))
    T1 = rng.exponential(2.0, (N, K))
    X = np.minimum(T1, C[:, None])
    D = (T1 <= C[:, None]).astype(int)
    n = N // 2
    labeled = np.arange(N) < n
    delta = np.where(labeled, (rng.uniform(size=N) < 0.5).astype(float), np.nan)
    return Dataset([f"s{i}" for i in range(N)], labeled, delta, C, Z, X, D)
