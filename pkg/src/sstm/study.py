"""Monte Carlo harness: bias, MSE, relative efficiency, and coverage tables.

Each replicate draws a fresh cohort, runs the full pipeline (with the
soft-threshold standardization always on, so the coverage and SE columns are
comparable across regimes), and the aggregate reports per-coordinate bias,
MSE, relative efficiency MSE_delta / MSE_ssl, the empirical SE of the
standardized estimator, the mean resampling SE, and CI coverage.

Replicates run across a process pool with per-replicate seed substreams and
a fixed-order aggregation, so outputs are byte-identical for any worker
count. Set ``checkpoint_dir`` to make long runs resumable.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import SstmError
from .inference import infer
from .pipeline import fit_ssl
from .simulate import SimulationSpec, calibrate_censoring, generate

_REP_TAG = 0x4E9D


@dataclass(frozen=True)
class StudyConfig:
    """Design of one Monte Carlo study."""

    scenario: str = "A_low"
    n: int = 500
    N: int = 1000
    reps: int = 100
    B: int = 200
    seed: int = 0
    regime: str = "auto"
    rho_threshold: float = 0.1
    alpha: float = 0.05
    link: str = "probit"
    lambda_delta: float | None = None
    lambda_grid: tuple | None = None
    target_event_rate: float = 0.5
    output_dir: str | None = None
    checkpoint_dir: str | None = None
    workers: int | None = None
    max_failure_rate: float = 0.05

    def resolved_workers(self) -> int:
        if self.workers is not None:
            return max(1, self.workers)
        env = os.environ.get("SSTM_WORKERS")
        if env:
            return max(1, int(env))
        return max(1, os.cpu_count() or 1)


@dataclass
class MetricsTable:
    """Per-coordinate study metrics plus the configuration echo."""

    coord: np.ndarray
    bias_delta: np.ndarray
    bias_ssl: np.ndarray
    mse_delta: np.ndarray
    mse_ssl: np.ndarray
    re: np.ndarray
    ese: np.ndarray
    ase: np.ndarray
    covp: np.ndarray
    reps_completed: int
    failures: int
    config: dict
    extras: dict = field(default_factory=dict)

    def to_csv(self, path=None) -> str:
        lines = ["coord,bias_delta_x100,bias_ssl_x100,mse_delta,mse_ssl,re,ese,ase,covp"]
        for i in range(self.coord.size):
            vals = [
                f"{100.0 * self.bias_delta[i]:.17g}",
                f"{100.0 * self.bias_ssl[i]:.17g}",
                f"{self.mse_delta[i]:.17g}",
                f"{self.mse_ssl[i]:.17g}",
                f"{self.re[i]:.17g}",
                f"{self.ese[i]:.17g}",
                f"{self.ase[i]:.17g}",
                f"{self.covp[i]:.17g}",
            ]
            lines.append(f"{int(self.coord[i])}," + ",".join(vals))
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    def to_json(self, path=None) -> str:
        payload = {
            "config": self.config,
            "reps_completed": self.reps_completed,
            "failures": self.failures,
            "coord": self.coord.tolist(),
            "bias_delta": self.bias_delta.tolist(),
            "bias_ssl": self.bias_ssl.tolist(),
            "mse_delta": self.mse_delta.tolist(),
            "mse_ssl": self.mse_ssl.tolist(),
            "re": self.re.tolist(),
            "ese": self.ese.tolist(),
            "ase": self.ase.tolist(),
            "covp": self.covp.tolist(),
            "extras": self.extras,
        }
        text = json.dumps(payload, indent=2)
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def _limit_threads():
    try:
        from threadpoolctl import threadpool_limits

        return threadpool_limits(limits=1)
    except ImportError:  # pragma: no cover - threadpoolctl ships as a dependency
        import contextlib

        return contextlib.nullcontext()


def _replicate(config: StudyConfig, rep: int, censoring_scale: float) -> dict:
    """One replicate; returns a JSON-serializable record."""
    spec = SimulationSpec(
        n=config.n,
        N=config.N,
        seed=(config.seed, _REP_TAG, rep),
        error_scenario=config.scenario,
        target_event_rate=config.target_event_rate,
        censoring_scale=censoring_scale,
    )
    dataset, truth = generate(spec)
    result = fit_ssl(
        dataset,
        link=config.link,
        B=config.B,
        seed=(config.seed, _REP_TAG, rep),
        regime=config.regime,
        rho_threshold=config.rho_threshold,
        alpha=config.alpha,
        lambda_delta=config.lambda_delta,
        lambda_grid=None if config.lambda_grid is None else np.asarray(config.lambda_grid),
        std_inference=True,
    )
    std_report = infer(
        result.ssl, result.ssl.replicates, result.regime, config.alpha,
        method="soft_std_quantile",
    )
    rq_report = infer(
        result.ssl, result.ssl.replicates, result.regime, config.alpha,
        method="recentered_quantile",
    )
    return {
        "rep": rep,
        "regime": result.regime,
        "beta0": truth.beta0.tolist(),
        "beta_delta": result.supervised.beta.tolist(),
        "beta_ssl": result.ssl.beta_ssl.tolist(),
        "beta_std": result.ssl.beta_std.tolist(),
        "lambda_soft": result.ssl.lambda_soft_used,
        "ase": [c.se for c in std_report.coordinates],
        "ci_lower": [c.ci_lower for c in std_report.coordinates],
        "ci_upper": [c.ci_upper for c in std_report.coordinates],
        "ci_lower_rq": [c.ci_lower for c in rq_report.coordinates],
        "ci_upper_rq": [c.ci_upper for c in rq_report.coordinates],
        "supervised_iterations": result.supervised.iterations,
        "supervised_residual": result.supervised.residual_norm,
    }


def _replicate_task(args) -> tuple[int, dict | None, str | None]:
    config, rep, ckpt, censoring_scale = args
    if ckpt is not None:
        path = Path(ckpt) / f"rep_{rep:06d}.json"
        if path.exists():
            return rep, json.loads(path.read_text(encoding="utf-8")), None
    try:
        with _limit_threads():
            record = _replicate(config, rep, censoring_scale)
    except SstmError as exc:
        record = None
        err = f"{type(exc).__name__}: {exc}"
    else:
        err = None
        if ckpt is not None:
            path = Path(ckpt) / f"rep_{rep:06d}.json"
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(record), encoding="utf-8")
            os.replace(tmp, path)
    return rep, record, err


def run_study(config: StudyConfig) -> MetricsTable:
    """Run the Monte Carlo study and aggregate the metrics table.

    Logs and excludes failed replicates; aborts when more than
    ``max_failure_rate`` of them fail. Writes ``metrics.csv``,
    ``metrics.json`` and ``replicates.jsonl`` under ``output_dir`` if set.
    """
    if config.reps < 1:
        raise SstmError("need at least one replicate")
    base = SimulationSpec(
        n=config.n, N=config.N, seed=config.seed, error_scenario=config.scenario,
        target_event_rate=config.target_event_rate,
    )
    a = calibrate_censoring(base)

    ckpt = config.checkpoint_dir
    if ckpt is not None:
        # replicate records are only valid for one exact configuration
        fingerprint = json.dumps({**_config_echo(config), "a": a}, sort_keys=True)
        digest = hashlib.sha256(fingerprint.encode()).hexdigest()[:16]
        ckpt = str(Path(ckpt) / digest)
        Path(ckpt).mkdir(parents=True, exist_ok=True)
    tasks = [(config, rep, ckpt, a) for rep in range(config.reps)]
    workers = config.resolved_workers()
    if workers > 1 and config.reps > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate_task, tasks, chunksize=1))
    else:
        with _limit_threads():
            results = [_replicate_task(t) for t in tasks]

    results.sort(key=lambda r: r[0])
    records = [rec for _, rec, _ in results if rec is not None]
    errors = [(rep, err) for rep, rec, err in results if rec is None]
    if len(errors) > config.max_failure_rate * config.reps:
        detail = "; ".join(f"rep {rep}: {err}" for rep, err in errors[:5])
        raise SstmError(
            f"{len(errors)}/{config.reps} replicates failed "
            f"(> {config.max_failure_rate:.0%} allowed): {detail}"
        )
    if not records:
        raise SstmError("no replicate finished")

    beta0 = np.asarray(records[0]["beta0"])
    p = beta0.size
    bd = np.array([r["beta_delta"] for r in records])
    bs = np.array([r["beta_ssl"] for r in records])
    bstd = np.array([r["beta_std"] for r in records])
    ases = np.array([r["ase"] for r in records])
    lo = np.array([r["ci_lower"] for r in records])
    hi = np.array([r["ci_upper"] for r in records])
    lo_rq = np.array([r["ci_lower_rq"] for r in records])
    hi_rq = np.array([r["ci_upper_rq"] for r in records])

    err_d = bd - beta0
    err_s = bs - beta0
    mse_d = (err_d**2).mean(axis=0)
    mse_s = (err_s**2).mean(axis=0)
    mse_std = ((bstd - beta0) ** 2).mean(axis=0)
    table = MetricsTable(
        coord=np.arange(1, p + 1),
        bias_delta=err_d.mean(axis=0),
        bias_ssl=err_s.mean(axis=0),
        mse_delta=mse_d,
        mse_ssl=mse_s,
        re=mse_d / mse_s,
        ese=bstd.std(axis=0, ddof=1),
        ase=ases.mean(axis=0),
        covp=((lo <= beta0) & (beta0 <= hi)).mean(axis=0),
        reps_completed=len(records),
        failures=len(errors),
        config=_config_echo(config),
        extras={
            "covp_recentered": ((lo_rq <= beta0) & (beta0 <= hi_rq)).mean(axis=0).tolist(),
            "mse_std": mse_std.tolist(),
            "re_std": (mse_d / mse_std).tolist(),
            "std_zero_fraction": (bstd == 0.0).mean(axis=0).tolist(),
            "censoring_scale": a,
            "beta0": beta0.tolist(),
            "mean_lambda_soft": float(np.mean([r["lambda_soft"] for r in records])),
        },
    )

    if config.output_dir is not None:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        table.to_csv(out / "metrics.csv")
        table.to_json(out / "metrics.json")
        with (out / "replicates.jsonl").open("w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
    return table


def _config_echo(config: StudyConfig) -> dict:
    echo = asdict(config)
    echo.pop("output_dir", None)
    echo.pop("checkpoint_dir", None)
    echo.pop("workers", None)
    if echo.get("lambda_grid") is not None:
        echo["lambda_grid"] = list(echo["lambda_grid"])
    return echo
