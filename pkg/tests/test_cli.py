import csv
import json
import math

import numpy as np
import pytest

from cohfrac import cli
from cohfrac.config import ConfigError, load_config, parse_config
from cohfrac.correlator import CorrelationHistogram
from cohfrac.inference import FitError
from cohfrac.optics import read_pts
from cohfrac.pipeline import analyze, run_point, sweep

FAST = """\
source:
  model: {model}
  rate: 4.0e7
  tau_c: 100e-9
  rho: {rho}
interferometer:
  delta: 1.0e-6
duration: 0.01
dt: 5e-9
seed: 4
"""


def write(tmp_path, text, name="s.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run(*argv):
    return cli.main([str(a) for a in argv])


# -- configuration -----------------------------------------------------------

def test_defaults_are_valid():
    cfg = load_config()
    assert cfg.interferometer().delta == 900e-9
    assert cfg.bin_width == 2e-9 and cfg.window == 2e-6
    assert cfg.detector("A").seed != cfg.detector("B").seed


def test_numbers_written_as_strings_are_accepted():
    cfg = parse_config("source:\n  tau_c: '300e-9'\n")
    assert cfg.field_model().tau_c == 300e-9


@pytest.mark.parametrize("text, line, key", [
    ("source:\n  model: mixture\n  rho: 1.5\n", 3, "source.rho"),
    ("seed: 1\nduration: -2\n", 2, "duration"),
    ("source:\n  tau_c: 300e-9\n  colour: red\n", 3, "source.colour"),
    ("fit:\n  method: bayes\n", 2, "fit.method"),
    ("detector_b:\n  gain: 2\n", 2, "detector_b.gain"),
])
def test_config_errors_name_file_and_line(tmp_path, text, line, key, capsys):
    path = write(tmp_path, text)
    with pytest.raises(ConfigError, match=rf"{path}:{line}: .*{key}"):
        load_config(path)
    assert run("simulate", "--config", path, "--output", tmp_path / "out") == 2
    assert f"{path}:{line}" in capsys.readouterr().err


def test_coarse_sampling_is_rejected():
    with pytest.raises(ConfigError, match="dt"):
        parse_config("source:\n  tau_c: 100e-9\ndt: 10e-9\n")


# -- simulate ----------------------------------------------------------------

def test_simulate_counts(tmp_path):
    # 1e5 /s for 10 s; slow phase drift makes the channel split fluctuate slightly
    path = write(tmp_path, "source:\n  tau_c: 20e-6\ninterferometer:\n  delta: 200e-6\n"
                           "duration: 10\ndt: 1e-6\n")
    assert run("simulate", "--config", path, "--output", tmp_path / "run") == 0
    a = read_pts(tmp_path / "run" / "A.pts")
    b = read_pts(tmp_path / "run" / "B.pts")
    assert abs(len(a) + len(b) - 1e6) < 5 * math.sqrt(1e6)
    for s in (a, b):
        assert abs(len(s) - 5e5) < 0.01 * 5e5


def test_simulate_is_deterministic(tmp_path):
    path = write(tmp_path, FAST.format(model="mixture", rho=0.5))
    for out in ("r1", "r2"):
        assert run("simulate", "--config", path, "--output", tmp_path / out) == 0
    for ch in "AB":
        assert (tmp_path / "r1" / f"{ch}.pts").read_bytes() == (tmp_path / "r2" / f"{ch}.pts").read_bytes()
    assert run("simulate", "--config", path, "--seed", 5, "--output", tmp_path / "r3") == 0
    assert (tmp_path / "r3" / "A.pts").read_bytes() != (tmp_path / "r1" / "A.pts").read_bytes()


def test_full_mixture_equals_coherent_source(tmp_path):
    mix = write(tmp_path, FAST.format(model="mixture", rho=1.0), "m.yaml")
    coh = write(tmp_path, FAST.format(model="coherent", rho=1.0), "c.yaml")
    assert run("simulate", "--config", mix, "--output", tmp_path / "m") == 0
    assert run("simulate", "--config", coh, "--output", tmp_path / "c") == 0
    for ch in "AB":
        assert (tmp_path / "m" / f"{ch}.pts").read_bytes() == (tmp_path / "c" / f"{ch}.pts").read_bytes()


def test_two_mode_total_rate_matches_single_mode(tmp_path):
    two = parse_config(FAST.format(model="two_mode", rho=1.0))
    one = parse_config(FAST.format(model="coherent", rho=1.0))
    n2 = sum(len(s) for s in __import__("cohfrac").pipeline.simulate(two))
    n1 = sum(len(s) for s in __import__("cohfrac").pipeline.simulate(one))
    expected = 4e7 * 0.01
    for n in (n1, n2):
        assert abs(n - expected) < 5 * math.sqrt(expected)


# -- correlate / analyze -----------------------------------------------------

def test_correlate_and_analyze(tmp_path, capsys):
    path = write(tmp_path, FAST.format(model="coherent", rho=1.0))
    run_dir = tmp_path / "run"
    assert run("simulate", "--config", path, "--output", run_dir) == 0
    hist = tmp_path / "g2x.csv"
    assert run("correlate", run_dir / "A.pts", run_dir / "B.pts", "--output", hist) == 0
    h = CorrelationHistogram.read(hist)
    assert len(h) == 2001
    res = tmp_path / "r.json"
    plot = tmp_path / "p.csv"
    assert run("analyze", hist, "--delta", 1e-6, "--output", res, "--plot-data", plot) == 0
    rec = json.loads(res.read_text())
    assert abs(rec["A"] - 0.5) < 5 * rec["sigma_A"]
    assert rec["rho_lower"]["mean"] <= rec["rho_upper"]["mean"]
    assert np.loadtxt(plot, delimiter=",").shape == (2001, 4)
    assert run("correlate", run_dir / "A.pts", "--output", tmp_path / "auto.csv") == 0


def test_single_point_sweep_equals_analyze():
    cfg = parse_config(FAST.format(model="mixture", rho=0.6))
    h, fit, bounds = run_point(cfg)
    row, = sweep(cfg, "rho", [0.6])
    assert row["status"] == "ok"
    assert row["A"] == fit.A
    assert row["upper_mean"] == bounds.upper.mean
    assert row["lower_ci_hi"] == bounds.lower.ci_hi


def test_sweep_is_monotone_in_rho(tmp_path):
    path = write(tmp_path, FAST.format(model="mixture", rho=1.0))
    out = tmp_path / "sweep.csv"
    assert run("sweep", "--config", path, "--axis", "rho", "--values", "0,0.25,0.5,0.75,1",
               "--output", out) == 0
    rows = list(csv.DictReader(open(out)))
    assert [r["status"] for r in rows] == ["ok"] * 5
    for col in ("lower_mean", "upper_mean"):
        vals = [float(r[col]) for r in rows]
        assert vals == sorted(vals)
    assert rows[1]["rho"] == "0.25"


def test_sweep_axis_must_match_model():
    cfg = parse_config(FAST.format(model="coherent", rho=1.0))
    with pytest.raises(ValueError):
        sweep(cfg, "rho", [0.5])


def test_region(tmp_path):
    out = tmp_path / "region.csv"
    assert run("region", "--points", 7, "--max", 1.5, "--output", out) == 0
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["g2x0", "g2_unc_lower", "g2_unc_upper"]
    assert rows[2] == ["0.25", "0", "0.5"]
    assert rows[4] == ["0.75", "1", ""]
    assert rows[7] == ["1.5", "3", ""]


# -- exit codes --------------------------------------------------------------

def flat_histogram(path, bump=0.0):
    centers = np.arange(-1000, 1001) * 2e-9
    counts = np.rint(10_000 * (1 + bump * np.exp(-np.abs(centers) / 50e-9))).astype(int)
    h = CorrelationHistogram(2e-9, 2.001e-6, centers, counts,
                             1e5, 1e5, 1e4 / (1e10 * 2e-9))
    h.write(path)


def test_nonphysical_exit_code(tmp_path, capsys):
    flat_histogram(tmp_path / "h.csv", bump=1.0)
    assert run("analyze", tmp_path / "h.csv") == 4
    assert "error:" in capsys.readouterr().err


def test_fit_error_exit_code(tmp_path, monkeypatch):
    flat_histogram(tmp_path / "h.csv")

    def boom(*args, **kwargs):
        raise FitError("did not converge")
    monkeypatch.setattr("cohfrac.pipeline.fit_dip", boom)
    assert run("analyze", tmp_path / "h.csv") == 3


def test_invalid_input_exit_code(tmp_path):
    (tmp_path / "x.pts").write_bytes(b"nope")
    assert run("correlate", tmp_path / "x.pts", "--output", tmp_path / "h.csv") == 2
    assert run("analyze", tmp_path / "missing.csv") == 2
    assert run("sweep", "--axis", "rho", "--values", "a,b") == 2
