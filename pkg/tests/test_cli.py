from __future__ import annotations

import csv
import json
import math
from dataclasses import replace

import pytest

from kborel.cli import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main
from kborel.config import desk_config, dumps_config, save_config
from kborel.problem import ComplexPolynomial


@pytest.fixture(scope="module")
def coarse_toml(tmp_path_factory, coarse):
    cfg = desk_config()
    cfg = replace(cfg, grid=coarse, sweep=replace(cfg.sweep, n_eps=3, eps_min=0.06, n_angles=8))
    return str(save_config(cfg, tmp_path_factory.mktemp("cfg") / "coarse.toml"))


def run(*argv):
    return main([str(a) for a in argv])


def test_validate_default_problem(tmp_path, capsys):
    assert run("validate", "--out", tmp_path) == EXIT_OK
    report = json.loads((tmp_path / "validation.json").read_text())
    assert report["passed"]
    assert "deg Q = deg R_D" in capsys.readouterr().out


def test_validate_failing_problem_exits_2(tmp_path):
    cfg = desk_config()
    bad = replace(cfg, problem=cfg.problem.replace(Q=ComplexPolynomial((-2.0, 0.0, 2.0, 1.0))))
    path = save_config(bad, tmp_path / "bad.toml")
    assert run("validate", "--config", path, "--out", tmp_path) == EXIT_VALIDATION
    assert not json.loads((tmp_path / "validation.json").read_text())["passed"]
    assert run("geometry", "--config", path, "--out", tmp_path) == EXIT_VALIDATION


def test_schema_error_exits_2(tmp_path, capsys):
    text = dumps_config(desk_config()).replace("n_m = 129", 'n_m = "many"')
    path = tmp_path / "schema.toml"
    path.write_text(text)
    assert run("geometry", "--config", path, "--out", tmp_path) == EXIT_VALIDATION
    assert "grid.n_m" in capsys.readouterr().err


def test_geometry_artifacts(tmp_path, coarse_toml):
    assert run("geometry", "--config", coarse_toml, "--out", tmp_path) == EXIT_OK
    for name in ("singularities.csv", "forbidden.json", "covering.json", "hbounds.json"):
        assert (tmp_path / name).is_file()
    cov = json.loads((tmp_path / "covering.json").read_text())
    assert len(cov["directions"]) == 2
    with open(tmp_path / "singularities.csv") as fh:
        rows = list(csv.DictReader(fh))
    tau0 = [r for r in rows if r["l"] == "0"]
    assert math.isclose(float(tau0[0]["tau_re"]), 0.90023, abs_tol=5e-6)


def test_ledger(tmp_path, coarse_toml):
    assert run("ledger", "--config", coarse_toml, "--out", tmp_path) == EXIT_OK
    ledgers = json.loads((tmp_path / "ledger.json").read_text())
    assert all(led["passed"] for led in ledgers)


def test_solve_is_deterministic(tmp_path, coarse_toml):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run("solve", "--config", coarse_toml, "--out", out, "--eps", "0.05,0.01") == EXIT_OK
    for name in ("trace_p0.json", "w_p0.csv", "ledger_p0.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    trace = json.loads((a / "trace_p0.json").read_text())
    assert trace["converged"] and trace["residual"] < 1e-8


def test_forced_root_direction_fails_in_solve_stage(tmp_path, coarse_toml, capsys):
    code = run("solve", "--config", coarse_toml, "--out", tmp_path, "--gamma", "0", "--force")
    assert code == EXIT_RUNTIME
    assert "stage 'solve'" in capsys.readouterr().err
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["failure"]["stage"] == "solve"
    assert (tmp_path / "covering.json").is_file()  # earlier artifacts are kept


def test_reconstruct_writes_samples(tmp_path, coarse_toml):
    assert run("reconstruct", "--config", coarse_toml, "--out", tmp_path, "--eps", "0.08") == EXIT_OK
    with open(tmp_path / "u_p0.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8 * 8
    assert all(math.isfinite(float(r["u_re"])) for r in rows)


def test_fit_from_sweep_csv(tmp_path, coarse_toml):
    path = tmp_path / "sweep.csv"
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["eps_abs", "eps_arg", "supdiff", "noise"])
        for i in range(10):
            e = 0.01 + 0.01 * i
            wr.writerow([e, 0.0, math.exp(5 - 2 / e**0.75), 0.0])
    assert run("fit", "--config", coarse_toml, "--out", tmp_path) == EXIT_OK
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert abs(fit["kappa_hat"] - 0.75) < 5e-4 and abs(fit["M"] - 2) < 1e-6
    assert (tmp_path / "fit_plot.csv").is_file()


def test_fit_without_sweep_exits_2(tmp_path, coarse_toml):
    assert run("fit", "--config", coarse_toml, "--out", tmp_path / "empty") == EXIT_VALIDATION


def test_pipeline_reports_every_criterion_once(tmp_path, coarse_toml):
    code = run("pipeline", "--config", coarse_toml, "--out", tmp_path)
    assert code == EXIT_OK
    report = json.loads((tmp_path / "report.json").read_text())
    numbers = [c["number"] for c in report["acceptance"]]
    assert numbers == list(range(1, 12))
    assert all({"passed", "measured"} <= set(c) for c in report["acceptance"])
    for key in ("validation", "geometry", "ledgers", "traces", "sweep"):
        assert key in report
    assert "seconds" not in json.dumps(report)
    assert (tmp_path / "sweep.csv").is_file() and (tmp_path / "u_p0.csv").is_file()


def test_subcommand_flags_after_command(tmp_path, coarse_toml):
    assert run("--out", tmp_path / "x", "geometry", "--config", coarse_toml) == EXIT_OK
    assert (tmp_path / "x" / "covering.json").is_file()


def test_order_hypothesis_violation_exits_2(tmp_path, capsys):
    text = dumps_config(desk_config()).replace("k = 0.75", "k = 1.2")
    path = tmp_path / "k.toml"
    path.write_text(text)
    assert run("validate", "--config", path, "--out", tmp_path) == EXIT_VALIDATION
    assert "k in (1/2, 1)" in capsys.readouterr().err


def test_missing_R_D_exits_2(tmp_path, capsys):
    text = dumps_config(desk_config())
    lines = [ln for ln in text.splitlines() if not ln.startswith("R = ")]
    path = tmp_path / "nor.toml"
    path.write_text("\n".join(lines) + "\n")
    assert run("validate", "--config", path, "--out", tmp_path) == EXIT_VALIDATION
    assert "'R'" in capsys.readouterr().err


def test_affine_pipeline_two_eps(tmp_path, coarse):
    cfg = desk_config()
    cfg = replace(cfg, problem=cfg.problem.replace(c12=0.0), grid=coarse,
                  sweep=replace(cfg.sweep, n_eps=2, eps_min=0.08, n_angles=8))
    path = save_config(cfg, tmp_path / "affine.toml")
    out = tmp_path / "out"
    assert run("pipeline", "--config", path, "--out", out) == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert len(report["traces"]) == 2
    first = (out / "sweep.csv").read_bytes()
    assert run("pipeline", "--config", path, "--out", out) == EXIT_OK
    assert (out / "sweep.csv").read_bytes() == first
