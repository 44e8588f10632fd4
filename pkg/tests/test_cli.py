import csv

import pytest
from hypothesis import given, settings, strategies as st

from granflow.cli import (EXIT_ASSERTION, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, ConfigError,
                          main, parse_config, serialize_config)

MINIMAL = """\
[grid]
cells = 8, 8

[time]
dt = 1e-3
t_end = 4e-3

[regularization]
eps = 1e-2
"""

FULL = MINIMAL + """
[rheology]
kind = phi_linear
phi_min = 0.3
phi_max = 0.6

[phi]
xi = 0.05

[forcing]
f = 0, -1

[solver]
picard_tol = 1e-10
linear_solver = direct

[initial]
u = vortex
amplitude = 0.05

[scales]
L = 0.1
U = 0.1
T = 0.01
d = 0.01
g = 10
"""


def test_minimal_config_defaults():
    cfg = parse_config(MINIMAL)
    sim = cfg.simulation
    assert sim.grid.cells == (8, 8) and sim.eps == 0.01 and sim.n_steps == 4
    assert sim.f == (0.0, 0.0) and sim.law.kind == "constant" and cfg.phi is None
    echo = serialize_config(cfg)
    assert "eps = 0.01" in echo and "[rheology]" not in echo


@pytest.mark.parametrize("text", [MINIMAL, FULL])
def test_round_trip(text):
    cfg = parse_config(text)
    again = parse_config(serialize_config(cfg))
    assert again == cfg and serialize_config(again) == serialize_config(cfg)


@settings(max_examples=30, deadline=None)
@given(eps=st.floats(1e-6, 2.0), dt=st.sampled_from([1e-3, 2e-3, 5e-4]),
       n=st.integers(0, 20), tol=st.floats(1e-14, 1e-6))
def test_round_trip_property(eps, dt, n, tol):
    text = (f"[grid]\ncells = 4, 4\n[time]\ndt = {dt!r}\nt_end = {n * dt!r}\n"
            f"[regularization]\neps = {eps!r}\n[solver]\npicard_tol = {tol!r}\n")
    cfg = parse_config(text)
    assert parse_config(serialize_config(cfg)) == cfg


def test_eps_too_large_cites_requirement():
    with pytest.raises(ConfigError, match=r"line 9: .*eps <= 2"):
        parse_config(MINIMAL.replace("eps = 1e-2", "eps = 3"))


def test_phi_init_outside_band_cites_hypothesis():
    text = FULL.replace("xi = 0.05", "xi = 0.05\ninit = uniform\nvalue = 0.58")
    with pytest.raises(ConfigError, match="existence hypothesis"):
        parse_config(text)


def test_unknown_and_missing_keys():
    with pytest.raises(ConfigError, match=r"line 3: unknown key 'spacing'"):
        parse_config(MINIMAL.replace("\n\n[time]", "\nspacing = 1\n[time]", 1))
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(MINIMAL + "[extras]\n")
    with pytest.raises(ConfigError, match="missing required key 'dt'"):
        parse_config(MINIMAL.replace("dt = 1e-3\n", ""))
    with pytest.raises(ConfigError, match="line 2: cannot read"):
        parse_config(MINIMAL.replace("8, 8", "8, x"))


def _write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_run_emits_tables(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", _write(tmp_path, MINIMAL.replace("eps = 1e-2", "eps = 1e-2\n[forcing]\nf = 0, -1")),
                 "--out", str(out), "--snapshot-every", "2"]) == EXIT_OK
    rows = list(csv.DictReader(open(out / "ledger.csv")))
    assert len(rows) == 4
    assert (out / "u_000002.txt").exists() and (out / "profiles.csv").exists()
    assert "ledger.csv" in (out / "plot_ledger.py").read_text()


def test_empty_run_header_only(tmp_path):
    out = tmp_path / "empty"
    text = MINIMAL.replace("t_end = 4e-3", "t_end = 0")
    assert main(["run", "--config", _write(tmp_path, text), "--out", str(out)]) == EXIT_OK
    for name in ("ledger.csv", "residuals.csv", "steps.csv"):
        assert len(open(out / name).read().strip().splitlines()) == 1


def test_run_phi_reports_ranges(tmp_path):
    out = tmp_path / "phi"
    text = FULL.replace("t_end = 4e-3", "t_end = 3e-3")
    assert main(["run-phi", "--config", _write(tmp_path, text), "--out", str(out)]) == EXIT_OK
    rows = list(csv.DictReader(open(out / "steps.csv")))
    assert len(rows) == 3
    assert all(0.3 - 1e-8 <= float(r["phi_min"]) and float(r["phi_max"]) <= 0.55 + 1e-8 for r in rows)
    assert main(["run", "--config", _write(tmp_path, text), "--out", str(out)]) == EXIT_CONFIG


def test_exit_codes(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)]) == EXIT_CONFIG
    bad = _write(tmp_path, MINIMAL.replace("eps = 1e-2", "eps = 3"), "bad.cfg")
    assert main(["run", "--config", bad, "--out", str(tmp_path)]) == EXIT_CONFIG
    stiff = _write(tmp_path, MINIMAL + "[forcing]\nf = 0, -1\n[solver]\npicard_max_iter = 1\n", "stiff.cfg")
    assert main(["run", "--config", stiff, "--out", str(tmp_path / "s")]) == EXIT_SOLVER
    err = capsys.readouterr().err
    assert "solver failure" in err and "configuration error" in err


def test_reduce_output(tmp_path, capsys):
    text = "[scales]\nL = 0.1\nU = 0.1\nT = 0.01\nd = 0.01\ng = 10\n"
    assert main(["reduce", "--config", _write(tmp_path, text)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "eps_scale = 0.01\n" in out and "Fr2 = 0.01\n" in out and "Di = 0.01\n" in out


def test_oracle_and_contraction(tmp_path):
    text = ("[grid]\ncells = 4, 4\n[time]\ndt = 1e-3\nt_end = 1e-3\n"
            "[regularization]\neps = 0.1\n[forcing]\nf = 1, 0\n")
    assert main(["oracle", "--config", _write(tmp_path, text)]) == EXIT_OK
    assert main(["oracle", "--config", _write(tmp_path, text), "--tol", "-1"]) == EXIT_ASSERTION
    text = MINIMAL.replace("t_end = 4e-3", "t_end = 1e-2") + "[initial]\nu = vortex\n"
    assert main(["contraction", "--config", _write(tmp_path, text, "c.cfg")]) == EXIT_OK


def test_sweep_assertions(tmp_path, capsys):
    path = _write(tmp_path, MINIMAL + "[initial]\nu = vortex\n")
    code = main(["sweep", "--config", path, "--param", "eps", "--values", "1e-1,1e-2",
                 "--asserts", "energy_monotone", "--out", str(tmp_path / "sw")])
    assert code == EXIT_OK
    forced = _write(tmp_path, MINIMAL + "[forcing]\nf = 0, -1\n", "forced.cfg")
    code = main(["sweep", "--config", forced, "--param", "eps", "--values", "1e-1,1e-2",
                 "--asserts", "energy_monotone"])
    assert code == EXIT_ASSERTION
    assert (tmp_path / "sw" / "sweep.csv").exists()
    assert main(["sweep", "--config", path, "--param", "eps", "--values", "1e-2,1e-1"]) == EXIT_CONFIG


def test_check_subset(capsys):
    assert main(["check", "--only", "3,9"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "criterion  3" in out and "criterion  9" in out
