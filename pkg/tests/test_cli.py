import json
import subprocess
import sys

import numpy as np
import pytest
from scipy import stats

from delaylik.cli import main
from delaylik.io import read_csv


def run(*args):
    return main([str(a) for a in args])


def test_help_runs_as_module():
    res = subprocess.run([sys.executable, "-m", "delaylik.cli", "--help"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    for cmd in ("simulate", "scan", "sample", "convergence", "appendix", "plot"):
        assert cmd in res.stdout


# -- simulate ---------------------------------------------------------------

def test_simulate_defaults_recorded_in_manifest(tmp_path):
    assert run("simulate", "--n-datasets", 1, "--out", tmp_path) == 0
    cfg = json.loads((tmp_path / "manifest.json").read_text())["config"]
    assert cfg["amplitude"] == 1.0 and cfg["length_scale"] == 10.0
    assert cfg["noise"] == 0.01 and cfg["true_delay"] == 10.0
    assert cfg["t_min"] == 0.0 and cfg["t_max"] == 1000.0 and cfg["n_data"] == 100
    _, data = read_csv(tmp_path / "pair_000_y1.csv")
    assert data.shape == (100, 2)


def test_simulate_rerun_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert run("simulate", "--n-datasets", 1, "--seed", 11, "--out", tmp_path / d) == 0
    for name in ("pair_000_y1.csv", "pair_000_y2.csv", "pair_000.json", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_single_point_grid(tmp_path):
    assert run("simulate", "--n-datasets", 1, "--n-data", 1, "--out", tmp_path) == 0
    for name in ("pair_000_y1.csv", "pair_000_y2.csv"):
        lines = (tmp_path / name).read_text().splitlines()
        assert len(lines) == 2


def test_unwritable_output_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run("simulate", "--n-datasets", 1, "--out", blocker / "sub") == 4


# -- configuration ----------------------------------------------------------

@pytest.mark.parametrize("args", [
    ("scan", "--n-delays", 0),
    ("scan", "--mode", "other"),
    ("convergence", "--budgets", ""),
    ("appendix", "--which", "nope"),
    ("simulate", "--noise", "abc"),
    ("sample", "--nlive", 1),
])
def test_bad_configuration_exits_2(tmp_path, args):
    assert run(*args, "--out", tmp_path / "o") == 2
    assert not (tmp_path / "o").exists()


def test_unknown_toml_key_exits_2(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("n_delays = 11\nbogus = 1\n")
    assert run("scan", "--config", cfg, "--out", tmp_path / "o") == 2


def test_flags_override_toml(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("n_data = 20\nn_delays = 11\nt_range = 200.0\nsvg = false\n")
    assert run("scan", "--config", cfg, "--n-delays", 21, "--out", tmp_path / "o") == 0
    _, data = read_csv(tmp_path / "o" / "scan.csv")
    assert data.shape[0] == 21
    assert not (tmp_path / "o" / "scan.svg").exists()


# -- scan -------------------------------------------------------------------

def test_analytic_scan_and_manifest_replay(tmp_path):
    args = ("scan", "--n-data", 30, "--t-range", 300, "--n-delays", 61)
    assert run(*args, "--out", tmp_path / "a") == 0
    header, data = read_csv(tmp_path / "a" / "scan.csv")
    assert header == ["delta_t", "e_loglik", "sd_exact", "sd_elementwise", "e_loglik_reg"]
    assert data[np.argmax(data[:, 1]), 0] == pytest.approx(10.0)
    assert (tmp_path / "a" / "scan.svg").exists()
    assert run("scan", "--config", tmp_path / "a" / "manifest.json", "--out", tmp_path / "b") == 0
    for name in ("scan.csv", "scan.svg", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_data_scan_shows_edge_rise(tmp_path):
    assert run("simulate", "--n-datasets", 1, "--out", tmp_path / "sim") == 0
    assert run("scan", "--mode", "data", "--y1", tmp_path / "sim" / "pair_000_y1.csv",
               "--y2", tmp_path / "sim" / "pair_000_y2.csv", "--n-delays", 401,
               "--out", tmp_path / "scan") == 0
    header, data = read_csv(tmp_path / "scan" / "scan.csv")
    assert header == ["delta_t", "loglik_ell_1", "loglik_ell_10", "loglik_ell_100"]
    d = data[:, 0]
    band = (np.abs(d) >= 950) & (np.abs(d) < 1000)
    for col in (2, 3):
        y = data[:, col]
        for sign in (-1, 1):
            side = band & (np.sign(d) == sign)
            assert y[side].max() > y[np.argmin(np.abs(d - sign * 500))]


def test_malformed_light_curve_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("time_days,magnitude\n0,1.0\n1,oops\n")
    assert run("scan", "--mode", "data", "--y1", bad, "--y2", bad, "--out", tmp_path / "o") == 4
    assert ":3" in capsys.readouterr().err


# -- sample -----------------------------------------------------------------

def test_flat_smoke_mode_is_uniform(tmp_path):
    assert run("sample", "--flat", "true", "--n-datasets", 1, "--nlive", 200,
               "--t-range", 100, "--n-data", 5, "--out", tmp_path) == 0
    _, pool = read_csv(tmp_path / "merged.csv")
    assert stats.kstest((pool[:, 0] + 100) / 200, "uniform").pvalue > 1e-3
    assert (tmp_path / "samples_000.json").exists()


def test_sample_on_supplied_files_uses_smc(tmp_path):
    assert run("simulate", "--n-datasets", 1, "--n-data", 40, "--t-max", 400,
               "--out", tmp_path / "sim") == 0
    assert run("sample", "--sampler", "smc", "--n-particles", 200,
               "--y1", tmp_path / "sim" / "pair_000_y1.csv",
               "--y2", tmp_path / "sim" / "pair_000_y2.csv", "--out", tmp_path / "s") == 0
    manifest = json.loads((tmp_path / "s" / "manifest.json").read_text())
    assert len(manifest["inputs"]) == 2
    assert "samples_000.csv" in manifest["outputs"]


# -- convergence, appendix, plot --------------------------------------------

def test_convergence_tiny_study(tmp_path):
    assert run("convergence", "--samplers", "ns", "--budgets", "10,20", "--t-ranges", 200,
               "--n-runs", 2, "--n-data", 30, "--calibrate", "false",
               "--out", tmp_path) == 0
    header, data = read_csv_text(tmp_path / "fractions.csv")
    assert header[:3] == ["sampler", "budget", "t_range"] and len(data) == 2
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["results"]["f_applied"] == 5.0
    assert (tmp_path / "fractions.svg").exists()


def read_csv_text(path):
    lines = path.read_text().splitlines()
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


def test_appendix_lengthscale_peak(tmp_path):
    assert run("appendix", "--which", "lengthscale", "--out", tmp_path) == 0
    _, data = read_csv(tmp_path / "lengthscale.csv")
    ell = data[:, 0]
    assert abs(ell[np.argmax(data[:, 1])] - 10.0) <= np.max(np.diff(ell))


def test_appendix_bayes_spectrum_not_positive_definite(tmp_path):
    assert run("appendix", "--which", "bayes-spectrum", "--n-data", 50, "--out", tmp_path) == 0
    results = json.loads((tmp_path / "manifest.json").read_text())["results"]
    assert results["min_rho"] < 0 and results["is_positive_definite"] is False


def test_appendix_condition_small_grid(tmp_path):
    assert run("appendix", "--which", "condition", "--n-data", 20, "--n-delays", 201,
               "--out", tmp_path) == 0
    header, data = read_csv(tmp_path / "condition.csv")
    assert header == ["delta_t", "condition_number"] and data.shape == (201, 2)


def test_plot_command(tmp_path):
    src = tmp_path / "d.csv"
    src.write_text("x,y\n0,1\n1,4\n2,9\n")
    assert run("plot", "--csv", src, "--out", tmp_path / "o") == 0
    assert (tmp_path / "o" / "d.svg").read_text().startswith("<svg")
    src.write_text("x,y\n0,1\n1,four\n")
    assert run("plot", "--csv", src, "--out", tmp_path / "o2") == 4
