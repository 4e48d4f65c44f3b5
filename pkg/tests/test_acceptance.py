"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line with the measured quantities.

The Monte Carlo studies at their stated sizes dominate the runtime
(roughly 1.5 h on two cores for the default set; minutes-scale on a larger
machine). The table-scale N=10000 runs take hours and are opt-in: set
SSTM_FULL_ACCEPT=1 (they carry the ``full`` marker). Set SSTM_ACCEPT_CACHE
to a directory to keep per-replicate checkpoints across invocations.
"""

import os
from pathlib import Path

import numpy as np
import pytest

import oracles
from sstm import (
    BETA0,
    BandwidthConfig,
    Dataset,
    GaussianKernel,
    Link,
    SimulationSpec,
    StudyConfig,
    auto_bandwidths,
    build_projection,
    ci_recentered_quantile,
    fit_censoring,
    fit_supervised,
    generate,
    rank_correlation,
    recenter_sign_preserving,
    run_study,
    smoothed_score,
    soft_threshold_std,
    stacked_score,
)

ACCEPT_SEED = 240801
NONZERO = list(range(9))
ZERO_COORD = 9
FULL = os.environ.get("SSTM_FULL_ACCEPT", "") == "1"
A_CAL = 9.036

KERNEL = GaussianKernel()
LINK = Link("probit")


def _cache_dir(tag):
    base = os.environ.get("SSTM_ACCEPT_CACHE")
    if not base:
        return None
    path = Path(base) / tag
    path.mkdir(parents=True, exist_ok=True)
    return str(path)


def _study(tag, **kw):
    cfg = StudyConfig(seed=ACCEPT_SEED, B=200, checkpoint_dir=_cache_dir(tag), **kw)
    return run_study(cfg)


def _report(name, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return ok


@pytest.fixture(scope="module")
def study_a_1000():
    return _study("a1000", scenario="A_low", n=500, N=1000, reps=100)


@pytest.fixture(scope="module")
def study_b_1000():
    return _study("b1000", scenario="B_high", n=500, N=1000, reps=100)


@pytest.fixture(scope="module")
def study_a_4000():
    # n/N = 0.125 sits above the auto threshold, but this run exists to smoke
    # the large-unlabeled pipeline at reduced N: override the regime
    return _study("a4000", scenario="A_low", n=500, N=4000, reps=25, regime="large_unlabeled")


@pytest.fixture(scope="module")
def study_a_10000():
    return _study("a10000", scenario="A_low", n=500, N=10000, reps=100)


def test_c1_bias_comparable(study_a_1000):
    t = study_a_1000
    worst = max(np.max(np.abs(t.bias_delta)), np.max(np.abs(t.bias_ssl)))
    ok = _report(
        "criterion 1 (bias, A, n=500, N=1000)",
        worst < 0.05,
        f"max |bias| delta={np.max(np.abs(t.bias_delta)):.4f} "
        f"ssl={np.max(np.abs(t.bias_ssl)):.4f} (< 0.05)",
    )
    assert ok


def test_c2_efficiency_comparable(study_a_1000, study_b_1000):
    re_a = study_a_1000.re[NONZERO].mean()
    re_b = study_b_1000.re[NONZERO].mean()
    ok = _report(
        "criterion 2 (relative efficiency, comparable regime)",
        re_a > 1.1 and re_b > 0.9,
        f"mean RE nonzero: scenario A {re_a:.3f} (> 1.1), scenario B {re_b:.3f} (> 0.9)",
    )
    assert ok


def test_c3_efficiency_large_unlabeled_smoke(study_a_4000):
    re10 = study_a_4000.re[ZERO_COORD]
    ok = _report(
        "criterion 3 smoke (A, n=500, N=4000, reps=25)",
        re10 > 5.0,
        f"RE(beta_10) = {re10:.1f} (> 5)",
    )
    assert ok


@pytest.mark.full
@pytest.mark.skipif(not FULL, reason="table-scale run; set SSTM_FULL_ACCEPT=1")
def test_c3_efficiency_large_unlabeled_full(study_a_10000):
    t = study_a_10000
    re_nz = t.re[NONZERO]
    re10 = t.re[ZERO_COORD]
    zero_frac = t.extras["std_zero_fraction"][ZERO_COORD]
    ok = _report(
        "criterion 3 full (A, n=500, N=10000, reps=100)",
        bool(np.all(re_nz > 1.5) and re10 > 10.0 and zero_frac >= 0.9),
        f"min RE nonzero = {re_nz.min():.2f} (> 1.5), RE(beta_10) = {re10:.1f} (> 10); "
        f"selected lambda zeroes beta_10 in {zero_frac:.0%} of replicates (>= 90%)",
    )
    assert ok


def test_c4_coverage_comparable(study_a_1000):
    t = study_a_1000
    cov = t.covp[NONZERO]
    cov_rq = np.asarray(t.extras["covp_recentered"])[NONZERO]
    ratio = (t.ase / t.ese)[NONZERO]
    ok = _report(
        "criterion 4 (coverage + SE agreement, N=1000)",
        bool(
            np.all((cov >= 0.90) & (cov <= 0.99))
            and np.all((cov_rq >= 0.90) & (cov_rq <= 0.99))
            and np.all((ratio >= 0.8) & (ratio <= 1.25))
        ),
        f"CovP nonzero in [{cov.min():.3f}, {cov.max():.3f}] (within [0.90, 0.99]); "
        f"re-centered-quantile CovP in [{cov_rq.min():.3f}, {cov_rq.max():.3f}]; "
        f"ASE/ESE in [{ratio.min():.2f}, {ratio.max():.2f}] (within [0.8, 1.25])",
    )
    assert ok


@pytest.mark.full
@pytest.mark.skipif(not FULL, reason="table-scale run; set SSTM_FULL_ACCEPT=1")
def test_c4_coverage_large_unlabeled_full(study_a_10000):
    t = study_a_10000
    cov = t.covp[NONZERO]
    cov10 = t.covp[ZERO_COORD]
    ratio = (t.ase / t.ese)[NONZERO]
    ok = _report(
        "criterion 4 full (coverage + SE agreement, N=10000)",
        bool(
            np.all((cov >= 0.90) & (cov <= 0.99))
            and cov10 >= 0.97
            and np.all((ratio >= 0.8) & (ratio <= 1.25))
        ),
        f"CovP nonzero in [{cov.min():.3f}, {cov.max():.3f}]; CovP(beta_10) = {cov10:.3f} "
        f"(>= 0.97); ASE/ESE in [{ratio.min():.2f}, {ratio.max():.2f}]",
    )
    assert ok


def test_c5_oracle_equivalence():
    worst = 0.0
    for seed in range(10):
        ds = oracles.random_cohort(seed, N=np.random.default_rng(seed).integers(20, 51))
        G = fit_censoring(ds)
        rng = np.random.default_rng(seed + 1000)
        Bdir = rng.normal(size=ds.p)
        Bdir /= np.linalg.norm(Bdir)
        h = float(rng.uniform(0.2, 0.8))
        bw = BandwidthConfig(h_supervised=1.0, h_score=np.full(ds.K, h))
        for k in range(ds.K):
            expect = oracles.smoothed_score(ds, k, Bdir, h, G)
            got = smoothed_score(ds, k, Bdir, KERNEL, bw, G)
            worst = max(worst, float(np.max(np.abs(got - expect))))
            raw_e, norm_e = oracles.rank_correlation(ds, k, Bdir, G)
            rc = rank_correlation(ds, k, Bdir, G)
            worst = max(worst, abs(rc.raw - raw_e), abs(rc.normalized - norm_e))
        for t in rng.uniform(0.0, 4.5, 20):
            worst = max(worst, abs(G.evaluate(t) - oracles.censoring_survival(ds.C, t)))
    ok = _report(
        "criterion 5 (brute-force oracle equivalence)",
        worst < 1e-12,
        f"max |difference| over 10 seeds = {worst:.2e} (< 1e-12)",
    )
    assert ok


def test_c6_score_mean_zero_at_truth():
    # undersmoothed index bandwidth (exponent 0.45, inside the admissible
    # (1/4, 1/2) range): the kernel bias is quadratic in h', and at the
    # simulation default it would be resolvable against 200-replicate noise
    b0 = BETA0 / np.linalg.norm(BETA0)
    vals = []
    for r in range(200):
        ds, _ = generate(
            SimulationSpec(n=500, N=1000, seed=(ACCEPT_SEED, 60, r), censoring_scale=A_CAL)
        )
        bw = auto_bandwidths(ds, b0)
        h_under = np.std(ds.Z @ b0, ddof=1) * ds.Dlt.sum(axis=0).astype(float) ** -0.45
        bw = BandwidthConfig(h_supervised=bw.h_supervised, h_score=h_under, rule="manual")
        vals.append(stacked_score(ds, b0, KERNEL, bw).S)
    vals = np.array(vals)
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / np.sqrt(vals.shape[0])
    ratio = np.max(np.abs(mean / se))
    ok = _report(
        "criterion 6a (score mean zero at the true direction)",
        ratio < 3.0,
        f"max |mean|/SE over 2p coordinates = {ratio:.2f} (< 3) across 200 replicates",
    )
    assert ok


def test_c6_collinearity_shrinks_with_n():
    stats = {}
    for n in (500, 2000):
        med = []
        for r in range(50):
            ds, _ = generate(
                SimulationSpec(n=n, N=n, seed=(ACCEPT_SEED, 61, n, r), censoring_scale=A_CAL)
            )
            fit = fit_supervised(ds, LINK, KERNEL)
            bdir = fit.beta / np.linalg.norm(fit.beta)
            bw = auto_bandwidths(ds, bdir)
            bundle = stacked_score(ds, bdir, KERNEL, bw)
            v = np.concatenate([bdir, bdir])
            med.append(abs(float(v @ bundle.S)))
        stats[n] = float(np.median(med))
    ok = _report(
        "criterion 6b (collinearity statistic shrinks with n)",
        stats[2000] < stats[500],
        f"median |B'S(B)|: n=500 -> {stats[500]:.4f}, n=2000 -> {stats[2000]:.4f}",
    )
    assert ok


def test_c7_supervised_contract():
    # block residuals via an independent per-grid-point evaluation
    from test_supervised import _block_residuals

    worst = 0.0
    for r in range(3):
        ds, _ = generate(
            SimulationSpec(n=300, N=400, seed=(ACCEPT_SEED, 70, r), censoring_scale=A_CAL)
        )
        fit = fit_supervised(ds, LINK, KERNEL)
        assert fit.converged
        b1, b2 = _block_residuals(ds, LINK, fit)
        worst = max(worst, float(np.max(np.abs(b1))), float(np.max(np.abs(b2))))
        V = np.random.default_rng(r).exponential(1.0, ds.N)
        fit_w = fit_supervised(ds, LINK, KERNEL, weights=V)
        b1w, b2w = _block_residuals(ds, LINK, fit_w, weights=V[ds.labeled])
        worst = max(worst, float(np.max(np.abs(b1w))), float(np.max(np.abs(b2w))))

    ds, _ = generate(SimulationSpec(n=300, N=300, seed=(ACCEPT_SEED, 71), censoring_scale=A_CAL))
    fit = fit_supervised(ds, LINK, KERNEL)
    c = 1.37
    Z2 = ds.Z.copy()
    Z2[:, 4] += c
    ds2 = Dataset(ds.ids, ds.labeled, ds.delta, ds.C, Z2, ds.X, ds.Dlt)
    fit2 = fit_supervised(ds2, LINK, KERNEL)
    eq_beta = float(np.max(np.abs(fit2.beta - fit.beta)))
    eq_h = float(np.max(np.abs(fit2.h_values - (fit.h_values - fit.beta[4] * c))))
    ok = _report(
        "criterion 7 (estimating equations + equivariance)",
        worst < 1e-6 and eq_beta < 1e-6 and eq_h < 1e-6,
        f"max block residual = {worst:.2e} (< 1e-6); equivariance gaps "
        f"beta {eq_beta:.2e}, h {eq_h:.2e} (< 1e-6)",
    )
    assert ok


def test_c8_transform_fixtures():
    checks = []
    out = soft_threshold_std(np.array([1.0, 0.01]), 0.001)
    checks.append(abs(out[0] - 1.00005) < 1e-5 and out[1] == 0.0)
    soft_sign = np.sign(-0.5) * max(abs(-0.5) - 0.01 / abs(-0.5), 0.0)
    checks.append(abs(soft_sign - (-0.48)) < 1e-12)

    reps = np.array([[0.3]])
    checks.append(recenter_sign_preserving(reps, np.array([-0.1]))[0, 0] == 0.0)
    reps0 = np.array([[0.0, 0.4], [0.0, 0.6]])
    centered = recenter_sign_preserving(reps0, np.array([0.7, 0.5]))
    checks.append(np.array_equal(centered[:, 0], [0.0, 0.0]))

    five = np.array([1.0, 2.0, 3.0, 4.0, 10.0])
    lo_expect = 1.0 + 0.4 * (2.0 - 1.0)  # h = (B-1) q + 1 at q = 0.1
    hi_expect = 4.0 + 0.6 * (10.0 - 4.0)
    lo, hi = ci_recentered_quantile(five[:, None], np.array([5.0]), np.array([1.0]), 0.2)
    shift = 5.0 - five.mean()
    checks.append(abs(lo - (lo_expect + shift)) < 1e-12 and abs(hi - (hi_expect + shift)) < 1e-12)

    checks.append(
        np.array_equal(build_projection("drop_j", 3, 1, 1).matrix, [[1, 0, 0], [0, 0, 1]])
    )
    checks.append(
        np.array_equal(build_projection("keep_k_drop_j", 2, 2, 0, 1).matrix, [[0, 0, 0, 1]])
    )
    checks.append(
        np.array_equal(
            build_projection("drop_j", 2, 2, 0).matrix, [[0, 1, 0, 0], [0, 0, 0, 1]]
        )
    )
    ok = _report(
        "criterion 8 (hand-computed transform fixtures)",
        all(checks),
        f"{sum(checks)}/{len(checks)} fixtures reproduced exactly",
    )
    assert ok


def test_c9_determinism(tmp_path):
    cfg = dict(scenario="A_low", n=120, N=300, reps=3, B=30, seed=ACCEPT_SEED)
    outs = []
    for name, workers in [("r1", 1), ("r2", 2), ("r3", 1)]:
        out = tmp_path / name
        run_study(StudyConfig(output_dir=str(out), workers=workers, **cfg))
        outs.append(out)
    same = all(
        (outs[0] / f).read_bytes() == (o / f).read_bytes()
        for o in outs[1:]
        for f in ("metrics.csv", "metrics.json", "replicates.jsonl")
    )
    ok = _report(
        "criterion 9 (byte-identical reruns across worker counts)",
        same,
        "3 runs (workers 1/2/1) produced identical metrics.csv/json and replicate logs",
    )
    assert ok
