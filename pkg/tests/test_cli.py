import json

import numpy as np
import pytest

from jcc_sched import cli, netdata, scheduler, svc


def _run(*argv):
    return cli.main(list(argv))


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Shared artifact directory so later stages reuse earlier outputs."""
    root = tmp_path_factory.mktemp("cli")
    samples = root / "samples.csv"
    assert _run("gen-samples", "--case", "ieee13", "--family", "beta",
                "--n", "120", "--seed", "4", "--out", str(samples)) == 0
    return root


def test_gen_samples_output(workdir):
    samples = netdata.load_samples(workdir / "samples.csv", dim=2)
    assert samples.horizon == 24
    assert samples.n_samples == 120
    # same seed, same draw
    again = workdir / "again.csv"
    assert _run("gen-samples", "--case", "ieee13", "--family", "beta",
                "--n", "120", "--seed", "4", "--out", str(again)) == 0
    back = netdata.load_samples(again)
    for t in range(24):
        np.testing.assert_array_equal(back.xi[t],
                                      netdata.load_samples(
                                          workdir / "samples.csv").xi[t])


def test_train_and_solve_and_evaluate(workdir):
    models = workdir / "models.json"
    assert _run("train-sets", "--case", "ieee13",
                "--samples", str(workdir / "samples.csv"),
                "--eps", "0.1", "--out", str(models)) == 0
    assert len(svc.load_models(models)) == 24

    solution = workdir / "solution.json"
    assert _run("solve", "--case", "ieee13",
                "--samples", str(workdir / "samples.csv"),
                "--method", "svc", "--eps", "0.1",
                "--models", str(models), "--out", str(solution)) == 0
    sol = scheduler.ScheduleSolution.load(solution)
    assert sol.status == "optimal"
    assert sol.method == "svc"

    record = workdir / "record.json"
    assert _run("evaluate", "--case", "ieee13",
                "--solution", str(solution),
                "--samples", str(workdir / "samples.csv"),
                "--label", "train", "--case-label", "demo",
                "--family", "beta", "--out", str(record)) == 0
    rec = json.loads(record.read_text())
    assert rec["case"] == "demo"
    assert rec["method"] == "svc"
    assert 0.0 <= rec["max_violation_train"] <= 1.0


def test_report_merges_records(workdir):
    record = workdir / "record.json"
    csv_out = workdir / "report.csv"
    json_out = workdir / "report.json"
    assert _run("report", "--inputs", str(record), str(record),
                "--csv", str(csv_out), "--json-out", str(json_out)) == 0
    assert csv_out.read_text().count("\n") == 3  # header + 2 runs
    assert len(json.loads(json_out.read_text())["runs"]) == 2


def test_evaluate_bound_gate(workdir):
    out = workdir / "gate.json"
    code = _run("evaluate", "--case", "ieee13",
                "--solution", str(workdir / "solution.json"),
                "--samples", str(workdir / "samples.csv"),
                "--bound", "-1.0", "--out", str(out))
    assert code == cli.EXIT_VALIDATION


def test_config_file_defaults_and_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 64, "seed": 9}))
    out = tmp_path / "a.csv"
    assert _run("--config", str(cfg), "gen-samples", "--case", "ieee13",
                "--family", "gaussian", "--out", str(out)) == 0
    assert netdata.load_samples(out).n_samples == 64
    # explicit flags beat config values
    out2 = tmp_path / "b.csv"
    assert _run("--config", str(cfg), "gen-samples", "--case", "ieee13",
                "--family", "gaussian", "--n", "32", "--out", str(out2)) == 0
    assert netdata.load_samples(out2).n_samples == 32


def test_unknown_case_exits_with_data_code(tmp_path, capsys):
    code = _run("gen-samples", "--case", "atlantis", "--family", "beta",
                "--out", str(tmp_path / "x.csv"))
    assert code == cli.EXIT_DATA
    err = capsys.readouterr().err
    doc = json.loads(err.strip().splitlines()[-1])
    assert doc["exit_code"] == cli.EXIT_DATA
    assert doc["error"] == "CaseFormatError"
    assert "atlantis" in doc["message"]


def test_bad_config_file_exits_with_config_code(tmp_path):
    cfg = tmp_path / "broken.json"
    cfg.write_text("{not json")
    code = _run("--config", str(cfg), "gen-samples", "--case", "ieee13",
                "--family", "beta", "--out", str(tmp_path / "x.csv"))
    assert code == cli.EXIT_CONFIG


def test_thread_limit_env_is_validated(tmp_path, monkeypatch):
    monkeypatch.setenv("JCC_SCHED_THREADS", "zero")
    code = _run("gen-samples", "--case", "ieee13", "--family", "beta",
                "--out", str(tmp_path / "x.csv"))
    assert code == cli.EXIT_CONFIG


def test_unknown_method_is_an_argparse_error(tmp_path):
    with pytest.raises(SystemExit):
        _run("solve", "--case", "ieee13", "--samples", "nope.csv",
             "--method", "cutting-plane", "--eps", "0.1",
             "--out", str(tmp_path / "x.json"))


def test_reproduce_writes_the_full_bundle(tmp_path):
    out = tmp_path / "repro"
    code = _run("reproduce", "--out-dir", str(out), "--cases", "1",
                "--eps-list", "0.25", "--methods", "box,hull",
                "--n-train", "80", "--n-holdout", "200")
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert len(report["runs"]) == 2
    assert (out / "report.csv").exists()
    sols = sorted(p.name for p in out.glob("*.solution.json"))
    assert len(sols) == 2