import csv
import dataclasses

import pytest

import freeknot.cli as cli
from freeknot.cli import SUMMARY_COLUMNS, TRACE_COLUMNS, RunConfig, UsageError, main, read_config_file, run


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def small_run(tmp_path, *extra):
    out = tmp_path / "out"
    code = main(["run", "--problem", "approx1d", "--degrees", "1,2", "--sizes", "6,8", "--lr", "0.01,0.02",
                 "--max-iters", "4", "--out", str(out), *extra])
    return code, out


def test_run_writes_summary_traces_and_knots(tmp_path):
    code, out = small_run(tmp_path)
    assert code == 0
    header = (out / "summary.csv").read_text().splitlines()[0]
    assert header == ",".join(SUMMARY_COLUMNS)
    rows = read_rows(out / "summary.csv")
    assert [(r["degree"], r["n_dofs"]) for r in rows] == [("1", "7"), ("1", "9"), ("2", "8"), ("2", "10")]
    for r in rows:
        assert r["experiment"] == "approx1d" and r["patches"] == "1"
        assert float(r["lr"]) in (0.01, 0.02)
        assert float(r["err_energy_adapted"]) <= float(r["err_energy_uniform"]) * 1.0001
        assert r["wall_s"] == "0.0"
    traces = sorted(p.name for p in (out / "traces").iterdir())
    assert len(traces) == 8 and "approx1d_p2_n8_lr1e-2.csv" in traces
    trace = read_rows(out / "traces" / "approx1d_p2_n8_lr1e-2.csv")
    assert list(trace[0]) == list(TRACE_COLUMNS) and len(trace) == 4
    knots = read_rows(out / "knots" / "approx1d_p1_n6_lr2e-2.csv")
    assert [k["iter"] for k in knots] == ["0", "1", "2", "3", "4"]
    assert len(knots[0]) == 1 + (6 + 3)


def test_summary_is_bitwise_reproducible(tmp_path):
    _, first = small_run(tmp_path / "a")
    _, second = small_run(tmp_path / "b")
    assert (first / "summary.csv").read_bytes() == (second / "summary.csv").read_bytes()


def test_uniform_only_and_gated_rows(tmp_path):
    out = tmp_path / "u"
    assert main(["run", "--problem", "poisson1d-smooth", "--degrees", "2", "--sizes", "8", "--max-iters", "0",
                 "--out", str(out)]) == 0
    (row,) = read_rows(out / "summary.csv")
    assert row["lr"] == "" and row["iters"] == "0" and row["err_energy_adapted"] == ""
    out = tmp_path / "g"
    assert main(["run", "--problem", "poisson2d-peak", "--degrees", "1", "--patches", "2", "--sizes", "2",
                 "--max-iters", "2", "--lr", "0.01", "--out", str(out)]) == 0
    (row,) = read_rows(out / "summary.csv")
    assert row["lr"] == "" and row["err_energy_uniform"] != ""


def test_aborted_run_exit_code(tmp_path, monkeypatch):
    real = cli.minimise

    def failing(*args, **kwargs):
        return dataclasses.replace(real(*args, **kwargs), aborted=True, reason="forced")

    monkeypatch.setattr(cli, "minimise", failing)
    code, out = small_run(tmp_path)
    assert code == 2
    assert (out / "summary.csv").exists()


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "exp.cfg"
    out = tmp_path / "cfg_out"
    cfg.write_text(f"# small run\nproblem = approx1d-smooth\ndegrees = 1\nsizes = 4, 6\n"
                   f"lr = 0.01\nmax-iters = 2\nout = {out}\n")
    values = read_config_file(cfg)
    assert values["sizes"] == [4, 6] and values["max_iters"] == 2 and values["lr"] == [0.01]
    assert main(["run", "--config", str(cfg), "--degrees", "2"]) == 0
    rows = read_rows(out / "summary.csv")
    assert [r["degree"] for r in rows] == ["2", "2"]


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    with pytest.raises(UsageError):
        read_config_file(bad)
    bad.write_text("sizes = a,b\n")
    with pytest.raises(UsageError):
        read_config_file(bad)
    bad.write_text("just words\n")
    with pytest.raises(UsageError):
        read_config_file(bad)
    with pytest.raises(UsageError):
        run(RunConfig(problem="approx1d", lr=[], out=str(tmp_path)))
    with pytest.raises(UsageError):
        run(RunConfig(problem="unknown", out=str(tmp_path)))
    bad.write_text("lr =\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "x")]) == 1


def test_usage_errors_exit_with_one(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--problem", "nonsense"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1


def test_threads_env(monkeypatch):
    monkeypatch.setenv("FREEKNOT_THREADS", "3")
    assert cli.threads_from_env() == 3
    monkeypatch.setenv("FREEKNOT_THREADS", "many")
    with pytest.raises(UsageError):
        cli.threads_from_env()
    monkeypatch.delenv("FREEKNOT_THREADS")
    assert cli.threads_from_env() == 1


def test_parallel_summary_matches_serial(tmp_path, monkeypatch):
    _, serial = small_run(tmp_path / "s")
    monkeypatch.setenv("FREEKNOT_THREADS", "2")
    _, par = small_run(tmp_path / "p")
    assert (serial / "summary.csv").read_bytes() == (par / "summary.csv").read_bytes()


def test_verify_command(tmp_path, capsys):
    out = tmp_path / "v.csv"
    assert main(["verify", "--lemma", "boundedness", "--p", "3", "--samples", "30", "--csv", str(out)]) == 0
    text = capsys.readouterr().out
    assert "boundedness" in text and text.strip().endswith("PASS")
    assert len(read_rows(out)) == 4
    assert main(["verify", "--lemma", "interchange", "--p", "0,2", "--samples", "3"]) == 0


def test_project_test_command(capsys):
    assert main(["project-test", "--instances", "60", "--seed", "1"]) == 0
    assert "PASS" in capsys.readouterr().out
    assert main(["project-test", "--instances", "20", "--tol", "-1"]) == 1


def test_plot_command(tmp_path, capsys):
    _, out = small_run(tmp_path)
    assert main(["plot", str(out)]) == 0
    written = capsys.readouterr().out.split()
    assert any(p.endswith("convergence_energy.svg") for p in written)
    svg = (out / "convergence_energy.svg").read_text()
    assert svg.startswith("<svg") and "polyline" in svg
    assert len(list((out / "knots").glob("*.svg"))) >= 1
