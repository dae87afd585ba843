import json
import subprocess
import sys

import numpy as np
import pytest

from kickedchain.cli import DYNAMICS_COLUMNS, LEVELSTATS_COLUMNS, main, read_csv, write_csv
from kickedchain.dynamics import log_time_grid
from synthetic import collapse_dataset

LEVEL_TOML = """
L = [8]
a = [1.5, 3.0]
b = "a"
theta_over_pi = 1.0
tau = {start = 0.1, stop = 0.5, num = 3}
samples = 4
seed = 7
"""

DYN_TOML = """
L = 8
a = 2.0
theta_over_pi = 1.0
tau = 0.2
samples = 3
t_max = 1000
n_times = 30
"""


@pytest.fixture
def cfg(tmp_path):
    def write(text, name="run.toml"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return write


def test_levelstats_grid(cfg, tmp_path):
    out = tmp_path / "r.csv"
    assert main(["levelstats", "--config", cfg(LEVEL_TOML), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "# kickedchain-levelstats v1; manifest=r.manifest.json"
    cols = read_csv(out, LEVELSTATS_COLUMNS)
    assert len(cols["tau"]) == 6
    assert np.all(cols["samples"] == 4) and np.all(cols["excluded"] == 0)
    assert np.all((cols["mean_r"] > 0.3) & (cols["mean_r"] < 0.6))
    manifest = json.loads((tmp_path / "r.manifest.json").read_text())
    assert manifest["master_seed"] == 7
    assert manifest["conventions"]["pair_sum"] == "ordered"
    assert "sweep" in manifest["timings_s"]


def test_levelstats_is_reproducible(cfg, tmp_path):
    path = cfg(LEVEL_TOML)
    one, two, par = (tmp_path / n for n in ("1.csv", "2.csv", "p.csv"))
    main(["levelstats", "--config", path, "--out", str(one)])
    main(["levelstats", "--config", path, "--out", str(two)])
    main(["levelstats", "--config", path, "--out", str(par), "--workers", "4"])
    body = lambda p: p.read_text().splitlines()[1:]
    assert body(one) == body(two) == body(par)
    other = tmp_path / "o.csv"
    main(["levelstats", "--config", path, "--out", str(other), "--seed", "8"])
    assert body(other) != body(one)


def test_dynamics_output(cfg, tmp_path):
    out = tmp_path / "d.csv"
    assert main(["dynamics", "--config", cfg(DYN_TOML), "--out", str(out)]) == 0
    cols = read_csv(out, DYNAMICS_COLUMNS)
    assert cols["t"][0] == 0 and cols["t"][-1] == 1000
    assert cols["mean_SvN"][0] == 0 and cols["mean_imbalance"][0] == 1
    assert np.all(cols["samples"] == 3)


def test_dynamics_rejects_grids(cfg, tmp_path):
    path = cfg(DYN_TOML.replace("tau = 0.2", "tau = [0.1, 0.2]"))
    assert main(["dynamics", "--config", path, "--out", str(tmp_path / "d.csv")]) == 1


def synthetic_levelstats(path, **kw):
    data = collapse_dataset(**kw)
    rows = []
    for L in data.sizes:
        tau, y, dy = data.curves[L]
        rows += [[L, 1.75, 1.75, np.pi, t, v, e, 100, 0] for t, v, e in zip(tau, y, dy)]
    write_csv(path, "levelstats", LEVELSTATS_COLUMNS, rows)


def test_collapse_command(tmp_path):
    csv_path, out = tmp_path / "syn.csv", tmp_path / "c.json"
    synthetic_levelstats(csv_path)
    assert main(["collapse", str(csv_path), "--out", str(out), "--require-clean"]) == 0
    res = json.loads(out.read_text())
    assert res["tau_c"] == pytest.approx(0.25, abs=0.02)
    assert res["nu"] == pytest.approx(0.9, abs=0.1)
    assert res["sizes"] == [8, 10, 12]
    assert (tmp_path / "c.manifest.json").exists()


def test_collapse_boundary_fails_check(tmp_path):
    csv_path = tmp_path / "syn.csv"
    synthetic_levelstats(csv_path)
    assert main(["collapse", str(csv_path), "--tau-range", "0.35", "0.6", "--require-clean"]) == 3


def test_malformed_csv_names_line(tmp_path, capsys):
    csv_path = tmp_path / "bad.csv"
    synthetic_levelstats(csv_path)
    lines = csv_path.read_text().splitlines()
    lines[5] = lines[5].replace(",", ";", 2)
    csv_path.write_text("\n".join(lines) + "\n")
    assert main(["collapse", str(csv_path)]) == 1
    assert "bad.csv:6" in capsys.readouterr().err


def write_dynamics(path, s):
    t = np.concatenate([[0], log_time_grid()])
    rows = [[ti, si, 0.01, 0.5, 0.01, 50] for ti, si in zip(t, np.concatenate([[0.0], s]))]
    write_csv(path, "dynamics", DYNAMICS_COLUMNS, rows)


def test_fit_command(tmp_path):
    t = log_time_grid().astype(float)
    src, out = tmp_path / "dyn.csv", tmp_path / "fit.json"
    write_dynamics(src, 0.05 * np.log(t) ** 2.5)
    assert main(["fit", str(src), "--out", str(out), "--t-min", "10", "--t-max", "1e6", "--expect", "log-power"]) == 0
    res = json.loads(out.read_text())
    assert res["log_power"]["gamma"] == pytest.approx(2.5, abs=0.05)
    assert res["log_power_leading_only"]["gamma"] == pytest.approx(2.5, abs=0.05)
    assert res["preferred"].startswith("log-power")
    assert main(["fit", str(src), "--t-min", "10", "--t-max", "1e6", "--expect", "algebraic"]) == 3


def test_fit_failure_is_numerical(tmp_path, capsys):
    src = tmp_path / "flat.csv"
    write_dynamics(src, np.full(len(log_time_grid()), 0.3))
    assert main(["fit", str(src), "--t-min", "10", "--t-max", "1e6"]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "GrowthFitError"


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["levelstats", "--out", "x.csv"],
        ["levelstats", "--config", "/nonexistent.toml", "--out", "x.csv"],
        ["collapse", "/nonexistent.csv"],
    ],
)
def test_usage_errors(argv):
    assert main(argv) == 1


def test_bad_config_values(cfg, tmp_path):
    out = str(tmp_path / "x.csv")
    assert main(["levelstats", "--config", cfg("L = 8\na = 2.0\ntau = 0.1\nbogus = 1\n"), "--out", out]) == 1
    assert main(["levelstats", "--config", cfg("L = 8\na = -1.0\ntau = 0.1\n"), "--out", out]) == 1
    assert main(["levelstats", "--config", cfg("L = 8\na = 2.0\n"), "--out", out]) == 1


def test_module_entry_point(tmp_path, cfg):
    out = tmp_path / "m.csv"
    proc = subprocess.run(
        [sys.executable, "-m", "kickedchain", "levelstats", "--config", cfg(LEVEL_TOML), "--out", str(out), "--samples", "2"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert len(read_csv(out, LEVELSTATS_COLUMNS)["tau"]) == 6
