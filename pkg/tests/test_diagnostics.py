import csv
from dataclasses import asdict

import numpy as np
import pytest

from granflow import harness
from granflow.diagnostics import (LEDGER_COLUMNS, Recorder, eps_scaling_probe, ledger,
                                  residuals, write_rows)
from granflow.fields import Grid, ScalarField, VectorField, mac_operators
from granflow.regularization import v_eps
from granflow.stepper import Integrator, State, initial_state, run


def _one_step(cfg):
    s0 = initial_state(cfg)
    s1, _ = Integrator(cfg).step(s0, 0)
    return s0, s1


def test_zero_state_gives_zero_ledger():
    cfg = harness.gravity_box(f=(0.0, 0.0), n_steps=1, cells=(8, 8))
    s0, s1 = _one_step(cfg)
    row = asdict(ledger(s1, s0, cfg))
    row.pop("time")
    assert all(v == 0.0 for v in row.values())


def test_identity_residual_first_order():
    g = Grid((16, 16))
    out = []
    for dt in (2e-3, 1e-3, 5e-4):
        cfg = harness.gravity_box(dt=dt, n_steps=1, cells=(16, 16), f=(0.0, 0.0), eps=0.1,
                                  u_init=harness.vortex_velocity(g, 0.1))
        s0, s1 = _one_step(cfg)
        led = ledger(s1, s0, cfg)
        assert abs(led.identity_residual) <= 10 * (dt + cfg.picard_tol) * led.kinetic
        assert abs(led.closure) <= 1e-12
        out.append(abs(led.identity_residual))
    assert out[0] / out[1] >= 2 and out[1] / out[2] >= 2


def test_pressure_dissipation_bound(rng):
    g = Grid((8, 8))
    cfg = harness.gravity_box(n_steps=1, cells=(8, 8), eps=0.2)
    p = rng.random(g.cells) * 3
    u = VectorField.from_interior(g, rng.standard_normal(mac_operators(g).n_u))
    s = State(0.001, u, ScalarField(g, p))
    led = ledger(s, initial_state(cfg), cfg)
    lower = g.cell_volume * np.sum(p * (np.sqrt(p) - 0.1))
    assert led.pressure_dissipation >= lower
    assert led.pressure_dissipation == pytest.approx(g.cell_volume * np.sum(p * v_eps(p, 0.2)))
    assert led.visc_dissipation >= 0 and led.grad_p_dissipation >= 0


def test_residuals_zero_shear(rng):
    g = Grid((6, 6))
    cfg = harness.gravity_box(n_steps=1, cells=(6, 6))
    s = State(0.001, VectorField.zeros(g), ScalarField(g, rng.standard_normal(g.cells)))
    r = residuals(s, initial_state(cfg), cfg)
    assert r.complementarity_defect == 0.0


def test_residuals_after_converged_step():
    g = Grid((12, 12))
    cfg = harness.gravity_box(n_steps=1, cells=(12, 12), eps=0.1,
                              u_init=harness.vortex_velocity(g, 0.3))
    s0, s1 = _one_step(cfg)
    r = residuals(s1, s0, cfg)
    assert 0 <= r.complementarity_defect <= 0.2 * max(r.p_max, 0.0)
    assert r.div_constraint_residual <= 1e-8 * r.div_constraint_scale
    assert r.momentum_residual <= 1e-8 * r.momentum_scale


def test_threshold_excess_for_nonnegative_pressure(rng):
    g = Grid((6, 6))
    cfg = harness.gravity_box(n_steps=1, cells=(6, 6))
    u = VectorField.from_interior(g, rng.standard_normal(mac_operators(g).n_u))
    s = State(0.001, u, ScalarField(g, rng.random(g.cells)))
    assert residuals(s, initial_state(cfg), cfg).threshold_excess <= 1e-14


def test_probe_examples():
    res = eps_scaling_probe([1e-1, 1e-2], [0.0, 0.0])
    assert res.exact_positivity and res.slope is None and str(res) == "exact positivity"
    eps = np.array([1e-1, 1e-2, 1e-3, 1e-4])
    assert eps_scaling_probe(eps, np.sqrt(eps)).slope == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        eps_scaling_probe([1e-1, 1e-2], [1.0])


def test_recorder_rows_and_delimited_output(tmp_path):
    cfg = harness.gravity_box(n_steps=4, cells=(8, 8))
    rec = Recorder(cfg)
    run(cfg, [rec])
    assert len(rec.ledgers) == 4 and len(rec.residuals) == 4
    path = tmp_path / "ledger.csv"
    write_rows(path, rec.ledger_rows(), LEDGER_COLUMNS)
    rows = list(csv.reader(open(path)))
    assert rows[0] == LEDGER_COLUMNS and len(rows) == 5
    assert float(rows[1][1]) == rec.ledgers[0].kinetic
    empty = tmp_path / "empty.csv"
    write_rows(empty, [], LEDGER_COLUMNS)
    assert open(empty).read().strip() == ",".join(LEDGER_COLUMNS)


def test_dissipation_terms_nonnegative_and_defect_sign():
    cfg = harness.gravity_box(n_steps=30, cells=(16, 16))
    rec = Recorder(cfg)
    run(cfg, [rec])
    for led in rec.ledgers:
        assert min(led.visc_dissipation, led.pressure_dissipation, led.grad_p_dissipation,
                   led.floor_dissipation) >= 0
    for res in rec.residuals:
        assert res.complementarity_defect <= 2 * cfg.eps * max(res.p_max, 0) + 1e-12
    assert -2 * cfg.eps * rec.alpha_p_plus <= rec.stress_defect <= 0


def test_phi_run_energy_ledger_refines():
    out = []
    for dt in (2e-3, 1e-3, 5e-4):
        cfg = harness.phi_box(dt=dt, n_steps=int(round(0.02 / dt)), cells=(16, 16))
        rec = Recorder(cfg, residuals=False)
        run(cfg, [rec])
        assert max(abs(l.closure) for l in rec.ledgers) <= 1e-12
        out.append(sum(abs(l.identity_residual) for l in rec.ledgers))
    assert out[0] > out[1] > out[2]
