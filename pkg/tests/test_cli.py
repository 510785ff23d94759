"""Command line surface: exit codes, echoed lines, and written files."""

import numpy as np
import pytest
from click.testing import CliRunner

from mfpca import formats
from mfpca.cli import main
from mfpca.harness import RateRecord

TINY_INI = """\
[model]
rank = 2
mu1 = 1.0
decay = 0.5
[sweep]
n = 60
p = 32
m = 16
d = 5
s = 2
sigma = 0.2
[run]
replicates = 2
seed = 11
tuning = oracle
"""


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text(TINY_INI)
    return str(path)


def test_sweep_writes_csv(runner, config_path, tmp_path):
    out = tmp_path / "rates.csv"
    result = runner.invoke(main, ["sweep", "--config", config_path,
                                  "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert "2 rows (0 failed)" in result.output
    rows = formats.read_rate_csv(out)
    assert len(rows) == 2
    assert all(r.status == "ok" and r.wall_ms == 0.0 for r in rows)


def test_sweep_rejects_zero_threads(runner, config_path, tmp_path):
    result = runner.invoke(main, ["sweep", "--config", config_path,
                                  "--out", str(tmp_path / "r.csv"),
                                  "--threads", "0"])
    assert result.exit_code == 2
    assert "--threads" in result.output


def test_sweep_needs_an_output_path(runner, config_path):
    result = runner.invoke(main, ["sweep", "--config", config_path])
    assert result.exit_code == 2
    assert "no output path" in result.output


def test_bad_config_is_a_usage_error(runner, tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text(TINY_INI.replace("m = 16", "m = 12"))  # 12 does not divide 32
    result = runner.invoke(main, ["sweep", "--config", str(path),
                                  "--out", str(tmp_path / "r.csv")])
    assert result.exit_code == 2
    assert "does not divide" in result.output


def test_rates_reports_reciprocal_slope(runner, tmp_path):
    rows = [RateRecord(n=n, p=8, D=2, M=4, s=1, sigma=0.0, seed=0, lam=0.0,
                       t=1.0, eta=1.0, err_g=5.0 / n, err_f=5.0 / n,
                       err_f_pca=5.0 / n, iterations=1, stationarity_gap=0.0,
                       oracle_satisfied=True, wall_ms=0.0)
            for n in (10, 100, 1000, 10000)]
    path = tmp_path / "fit.csv"
    formats.write_rate_csv(rows, path)
    result = runner.invoke(main, ["rates", str(path)])
    assert result.exit_code == 0, result.output
    assert "slope -1.00" in result.output
    assert "4 rows, 0 failed" in result.output


def test_rates_rejects_foreign_csv(runner, tmp_path):
    path = tmp_path / "foreign.csv"
    path.write_text("a,b\n1,2\n")
    result = runner.invoke(main, ["rates", str(path)])
    assert result.exit_code == 1
    assert "header" in result.output


def test_diagnose_reports_vanishing_noise_remainder(runner):
    result = runner.invoke(main, ["diagnose"])
    assert result.exit_code == 0, result.output
    assert "max_RN = 0.000000e+00" in result.output
    assert "VIOLATED" not in result.output
    assert "projection_bias" in result.output
    assert "hellinger_h2n" in result.output


def test_diagnose_writes_report_file(runner, tmp_path):
    out = tmp_path / "diag.txt"
    result = runner.invoke(main, ["diagnose", "--m", "8", "--p", "64",
                                  "--out", str(out)])
    assert result.exit_code == 0
    assert out.read_text().startswith("max_RN")


def test_simulate_binary_round_trip(runner, config_path, tmp_path):
    out = tmp_path / "obs.bin"
    result = runner.invoke(main, ["simulate", "--config", config_path,
                                  "--out", str(out), "--format", "binary"])
    assert result.exit_code == 0, result.output
    assert "wrote 60 x 5 x 32 observations" in result.output
    Y = formats.read_observations(out)
    assert Y.shape == (60, 5, 32)
    assert np.all(np.isfinite(Y))


def test_simulate_csv_round_trip(runner, config_path, tmp_path):
    out = tmp_path / "obs.csv"
    result = runner.invoke(main, ["simulate", "--config", config_path,
                                  "--out", str(out)])
    assert result.exit_code == 0
    Y = formats.read_observations(out)
    assert Y.shape == (60, 5, 32)


def test_simulate_seed_override_changes_draw(runner, config_path, tmp_path):
    a, b, c = (tmp_path / name for name in ("a.bin", "b.bin", "c.bin"))
    for path, args in ((a, []), (b, []), (c, ["--seed", "12"])):
        result = runner.invoke(main, ["simulate", "--config", config_path,
                                      "--out", str(path), "--format", "binary",
                                      *args])
        assert result.exit_code == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


def test_estimate_reports_errors_and_tuning(runner, config_path, tmp_path):
    out = tmp_path / "record.csv"
    result = runner.invoke(main, ["estimate", "--config", config_path,
                                  "--out", str(out)])
    assert result.exit_code == 0, result.output
    for key in ("err_g = ", "err_f = ", "mu_hat = ", "active_components = ",
                "iterations = "):
        assert key in result.output
    rows = formats.read_rate_csv(out)
    assert len(rows) == 1 and rows[0].status == "ok"


def test_estimate_on_file_requires_practice_tuning(runner, config_path,
                                                   tmp_path):
    dump = tmp_path / "obs.bin"
    runner.invoke(main, ["simulate", "--config", config_path,
                         "--out", str(dump), "--format", "binary"])
    result = runner.invoke(main, ["estimate", "--config", config_path,
                                  "--in", str(dump)])
    assert result.exit_code == 2
    assert "tuning" in result.output


def test_estimate_on_file_with_practice_tuning(runner, tmp_path):
    cfg = tmp_path / "practice.ini"
    cfg.write_text(TINY_INI.replace("tuning = oracle", "tuning = practice")
                   .replace("n = 60", "n = 200"))
    dump = tmp_path / "obs.bin"
    sim = CliRunner().invoke(main, ["simulate", "--config", str(cfg),
                                    "--out", str(dump), "--format", "binary"])
    assert sim.exit_code == 0
    result = runner.invoke(main, ["estimate", "--config", str(cfg),
                                  "--in", str(dump)])
    assert result.exit_code == 0, result.output
    assert "mu_hat = " in result.output
    assert "active_components = " in result.output


def test_estimate_on_file_rejects_indivisible_grid(runner, tmp_path):
    cfg = tmp_path / "practice.ini"
    cfg.write_text(TINY_INI.replace("tuning = oracle", "tuning = practice"))
    dump = tmp_path / "obs.bin"
    formats.write_observations_binary(np.zeros((4, 2, 30)), dump)  # 16 ∤ 30
    result = runner.invoke(main, ["estimate", "--config", str(cfg),
                                  "--in", str(dump)])
    assert result.exit_code == 2
    assert "does not divide" in result.output


def test_selftest_passes(runner):
    result = runner.invoke(main, ["selftest"])
    assert result.exit_code == 0, result.output
    assert "all 9 checks passed" in result.output
    assert "FAIL" not in result.output
