import json

import numpy as np
import pytest

from sstm import SimulationSpec, StudyConfig, generate, run_study
from sstm.cli import main
from sstm.exceptions import SstmError
import sstm.study as study_mod

A_CAL = 9.036
SMALL = dict(n=120, N=300, reps=3, B=25, seed=42)


def _small_config(**kw):
    base = dict(SMALL)
    base.update(kw)
    return StudyConfig(**base)


@pytest.fixture(scope="module")
def small_table(tmp_path_factory):
    out = tmp_path_factory.mktemp("study")
    table = run_study(_small_config(output_dir=str(out), workers=1))
    return table, out


def test_metrics_outputs_exist(small_table):
    table, out = small_table
    assert (out / "metrics.csv").exists()
    assert (out / "metrics.json").exists()
    lines = (out / "replicates.jsonl").read_text().splitlines()
    assert len(lines) == SMALL["reps"]
    header = (out / "metrics.csv").read_text().splitlines()[0]
    assert header == "coord,bias_delta_x100,bias_ssl_x100,mse_delta,mse_ssl,re,ese,ase,covp"


def test_metrics_invariants(small_table):
    table, _ = small_table
    assert table.reps_completed == SMALL["reps"]
    assert np.all(table.re > 0)
    assert np.all((table.covp >= 0) & (table.covp <= 1))
    assert np.all(table.mse_delta > 0)
    assert table.coord.tolist() == list(range(1, 11))


def test_single_replicate_bias_is_exact_error():
    table = run_study(_small_config(reps=1, workers=1))
    rec_bias = table.bias_delta
    ds_spec = SimulationSpec(
        n=SMALL["n"], N=SMALL["N"], seed=(SMALL["seed"], study_mod._REP_TAG, 0),
        censoring_scale=table.extras["censoring_scale"],
    )
    dataset, truth = generate(ds_spec)
    from sstm import GaussianKernel, Link, fit_supervised

    fit = fit_supervised(dataset, Link("probit"), GaussianKernel())
    np.testing.assert_allclose(rec_bias, fit.beta - truth.beta0, atol=1e-10)


def test_study_determinism_across_worker_counts(tmp_path):
    out1, out2 = tmp_path / "w1", tmp_path / "w2"
    run_study(_small_config(output_dir=str(out1), workers=1))
    run_study(_small_config(output_dir=str(out2), workers=2))
    for name in ["metrics.csv", "metrics.json", "replicates.jsonl"]:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_study_checkpoint_resume(tmp_path):
    ckpt = tmp_path / "ckpt"
    out1 = tmp_path / "o1"
    run_study(_small_config(output_dir=str(out1), checkpoint_dir=str(ckpt), workers=1))
    # records live under a per-configuration hash directory
    assert len(list(ckpt.glob("*/rep_*.json"))) == SMALL["reps"]
    # a resumed run reuses the records and reproduces the outputs
    out2 = tmp_path / "o2"
    run_study(_small_config(output_dir=str(out2), checkpoint_dir=str(ckpt), workers=1))
    assert (out1 / "metrics.csv").read_bytes() == (out2 / "metrics.csv").read_bytes()


def test_study_aborts_on_failures(monkeypatch):
    calls = {"k": 0}
    real = study_mod._replicate

    def flaky(config, rep, a):
        if rep != 1:
            raise SstmError("injected failure")
        return real(config, rep, a)

    monkeypatch.setattr(study_mod, "_replicate", flaky)
    with pytest.raises(SstmError, match="replicates failed"):
        run_study(_small_config(workers=1))


def test_study_excludes_isolated_failure(monkeypatch):
    real = study_mod._replicate

    def flaky(config, rep, a):
        if rep == 2:
            raise SstmError("injected failure")
        return real(config, rep, a)

    monkeypatch.setattr(study_mod, "_replicate", flaky)
    table = run_study(_small_config(reps=3, max_failure_rate=0.5, workers=1))
    assert table.reps_completed == 2
    assert table.failures == 1


def test_workers_env_var(monkeypatch):
    monkeypatch.setenv("SSTM_WORKERS", "3")
    assert _small_config(workers=None).resolved_workers() == 3
    monkeypatch.delenv("SSTM_WORKERS")
    assert _small_config(workers=5).resolved_workers() == 5


# ---------------------------------------------------------------- CLI


def test_cli_simulate_and_fit(tmp_path, capsys):
    sim_out = tmp_path / "sim"
    rc = main([
        "simulate", "--n", "120", "--N", "300", "--scenario", "A", "--seed", "7",
        "--censoring-scale", str(A_CAL), "--out", str(sim_out),
    ])
    assert rc == 0
    assert (sim_out / "cohort.csv").exists()
    truth = json.loads((sim_out / "truth.json").read_text())
    assert truth["beta0"][0] == 0.7 and truth["a"] == A_CAL

    fit_out = tmp_path / "fit"
    rc = main([
        "fit", "--data", str(sim_out / "cohort.csv"), "--link", "probit",
        "--B", "25", "--seed", "3", "--out", str(fit_out),
    ])
    assert rc == 0
    for name in ["supervised_fit.json", "ssl_fit.json", "weights.json", "scores.json", "inference.json", "inference.csv"]:
        assert (fit_out / name).exists(), name
    out = capsys.readouterr().out
    assert "regime" in out

    inf_out = tmp_path / "inf"
    rc = main([
        "infer", "--fit", str(fit_out / "ssl_fit.json"), "--alpha", "0.1",
        "--out", str(inf_out),
    ])
    assert rc == 0
    report = json.loads((inf_out / "inference.json").read_text())
    assert report["level"] == 0.9


def test_cli_unknown_flag_exits_1(capsys):
    assert main(["simulate", "--bogus", "1", "--out", "x"]) == 1
    assert main(["nonsense"]) == 1


def test_cli_schema_violation_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("id,labeled,delta,C,Z1,X1,D1\na,1,1,2.0,0.1,2.5,1\n")
    rc = main(["fit", "--data", str(bad), "--out", str(tmp_path / "o")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "row 1" in err


def test_cli_missing_file_exits_2(tmp_path):
    assert main(["fit", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o")]) == 2


def test_cli_reproduce_deterministic(tmp_path):
    args = [
        "reproduce", "--table", "1", "--scenario", "A", "--reps", "2",
        "--B", "25", "--seed", "7", "--n", "120", "--N", "300",
    ]
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    for name in ["metrics.csv", "metrics.json", "replicates.jsonl"]:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_cli_reproduce_table2_smoke(tmp_path, capsys):
    rc = main([
        "reproduce", "--table", "2", "--scenario", "B", "--reps", "1",
        "--B", "25", "--seed", "3", "--n", "120", "--N", "300",
        "--out", str(tmp_path / "t2"),
    ])
    assert rc == 0
    out = capsys.readouterr().out
    assert "CovP" in out


def test_metrics_json_roundtrip(small_table):
    table, out = small_table
    payload = json.loads((out / "metrics.json").read_text())
    np.testing.assert_allclose(payload["re"], table.re)
    assert payload["config"]["scenario"] == "A_low"
    assert payload["reps_completed"] == SMALL["reps"]


def test_study_checkpoint_isolated_per_config(tmp_path):
    ckpt = tmp_path / "ckpt"
    run_study(_small_config(checkpoint_dir=str(ckpt), workers=1))
    run_study(_small_config(checkpoint_dir=str(ckpt), workers=1, seed=43))
    assert len(list(ckpt.glob("*/"))) == 2
