import csv
import subprocess
import sys

import numpy as np
import pytest

from htlmm import checkpoint, ht
from htlmm.cli import EXIT_BUDGET, EXIT_CONFIG, EXIT_OK, main

SMALL = """
[pde]
dimension = 2
scheme = fourier
n = 9

[coefficients]
drift.1 = sin(x2)
drift.2 = cos(x1)
initial = 1/(2*pi^2) * (sin(x1)*cos(x2) + cos(x1)*sin(x2))^2

[integrator]
method = ab2
dt = 0.01
T = 0.2
cap = 3
tau_caps = 1, 2

[output]
stride = 5
marginal_modes = 1, 2
marginal_stride = 10
checkpoint_stride = 10
"""


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.cfg"
    p.write_text(SMALL)
    return p


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def test_run_writes_artifacts(small_cfg, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", str(small_cfg), "--out", str(out)]) == EXIT_OK
    rows = read_csv(out / "record.csv")
    assert rows[0] == ["step", "t", "norm", "size_pre", "size_post", "rank_pre", "rank_post", "tau", "mass", "tau_1", "tau_2"]
    assert [int(r[0]) for r in rows[1:]] == [0, 5, 10, 15, 20]
    assert all(int(r[4]) <= 3 for r in rows[1:])
    assert all(float(r[7]) <= 1 + 1e-12 for r in rows[1:])
    marg = read_csv(out / "marginal.csv")
    assert marg[0] == ["step", "t", "mode", "x", "density"] and len(marg) == 1 + 3 * 2 * 9
    assert sorted(p.name for p in (out / "checkpoints").iterdir()) == ["step_000000.ht", "step_000010.ht", "step_000020.ht"]
    X = checkpoint.load(out / "final.ht")
    assert X.shape == (9, 9)
    assert read_csv(out / "timing.csv")[0] == ["step", "wall_seconds"]


def test_run_is_deterministic(small_cfg, tmp_path):
    for name in ("a", "b"):
        assert main(["run", "--config", str(small_cfg), "--out", str(tmp_path / name)]) == EXIT_OK
    for f in ("record.csv", "marginal.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert (tmp_path / "a" / "final.ht").read_bytes() == (tmp_path / "b" / "final.ht").read_bytes()


def test_seed_changes_random_initial(tmp_path):
    cfg = tmp_path / "r.cfg"
    cfg.write_text(SMALL.replace("initial = 1/(2*pi^2) * (sin(x1)*cos(x2) + cos(x1)*sin(x2))^2", "initial = random_rank1"))
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "s0"), "--seed", "0"])
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "s1"), "--seed", "1"])
    assert (tmp_path / "s0" / "record.csv").read_bytes() != (tmp_path / "s1" / "record.csv").read_bytes()


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text(SMALL.replace("n = 9", "n = 9\nwrong = 1"))
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert ":6:" in capsys.readouterr().err
    assert main(["run", "--config", "no_such_preset", "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_budget_exit_code(tmp_path, capsys):
    cfg = tmp_path / "big.cfg"
    cfg.write_text(
        "[pde]\ndimension = 6\nn = 31\n[coefficients]\ndrift.1 = 1\ninitial = 1\n"
        "[integrator]\ndt = 0.1\nT = 0.1\nrepresentation = dense\n"
    )
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_BUDGET
    assert "budget" in capsys.readouterr().err


def test_marginal_and_info(tmp_path, capsys):
    v = [np.sin(np.arange(7) * 2 * np.pi / 7) ** 2 / np.pi for _ in range(3)]
    path = tmp_path / "x.ht"
    checkpoint.save(ht.rank1(v), path)
    assert main(["marginal", str(path), "--mode", "2"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "x,density" and len(lines) == 8
    dens = np.array([float(l.split(",")[1]) for l in lines[1:]])
    np.testing.assert_allclose(dens, v[1], atol=1e-12)
    assert main(["marginal", str(path), "--mode", "2", "--out", str(tmp_path / "m")]) == EXIT_OK
    assert (tmp_path / "m" / "marginal_mode2.csv").is_file()
    assert main(["marginal", str(path), "--mode", "4"]) == EXIT_CONFIG
    assert main(["info", str(path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "actual_float64_bytes = " in out and "modes=[1, 2, 3] r=1" in out
    junk = tmp_path / "junk.ht"
    junk.write_bytes(b"garbage")
    assert main(["info", str(junk)]) == EXIT_CONFIG
    assert main(["info", str(tmp_path / "missing.ht")]) == EXIT_CONFIG


def test_stability_growth_small(tmp_path):
    cfg = tmp_path / "g.cfg"
    cfg.write_text(
        "[pde]\ndimension = 2\n[coefficients]\ndrift.1 = sin(x2)\ndrift.2 = cos(x1)\n"
        "[integrator]\ndt = 0.0025\nT = 0.0025\n"
        "[stability]\nkind = growth\nn_values = 4\nk_max = 50\nsamples = 10\n"
    )
    assert main(["stability", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    summ = read_csv(tmp_path / "o" / "growth_summary.csv")
    assert [r[0] for r in summ[1:]] == ["fd2", "fourier"]
    trace = read_csv(tmp_path / "o" / "trace_fourier_n4.csv")
    assert trace[0] == ["k", "norm"] and trace[-1][0] == "50"


def test_stability_cfl_small(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(
        "[pde]\ndimension = 1\nscheme = fd2\nn = 8\n[integrator]\nmethod = euler\ndt = 0.01\nT = 0.01\nrepresentation = dense\n"
        "[stability]\nkind = cfl\ndims = 1\nsteps = 300\nbisect = false\n"
    )
    assert main(["stability", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    table = read_csv(tmp_path / "o" / "cfl_table.csv")
    assert [r[-1] for r in table[1:]] == ["1", "0"]
    assert "dt_star = " in (tmp_path / "o" / "cfl_dense_d1.txt").read_text()


def test_full_flag_warns(small_cfg, tmp_path, capsys):
    assert main(["run", "--config", str(small_cfg), "--out", str(tmp_path / "o"), "--full"]) == EXIT_OK
    assert "warning" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "htlmm.cli", "info", str(tmp_path / "nope")], capture_output=True, text=True)
    assert r.returncode == EXIT_CONFIG
    r = subprocess.run([sys.executable, "-m", "htlmm.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "stability" in r.stdout
