import numpy as np
import pytest

from granflow import harness
from granflow.fields import Grid, VectorField
from granflow.stepper import SimulationConfig


def test_scenarios():
    cfg = harness.gravity_box(cells=(8, 8))
    assert cfg.f == (0.0, -1.0) and cfg.n_steps == 200
    g = Grid((8, 8))
    u = harness.vortex_velocity(g)
    from granflow.fields import divergence
    assert np.abs(divergence(u).values).max() <= 1e-12
    phi = harness.phi_box(cells=(8, 8)).phi_init.values
    assert phi.min() >= 0.3 and phi.max() <= 0.55


def test_sweep_spec_validation():
    base = harness.gravity_box(n_steps=2, cells=(8, 8))
    with pytest.raises(ValueError):
        harness.SweepSpec(base, "alpha", [1.0])
    with pytest.raises(ValueError):
        harness.SweepSpec(base, "eps", [1e-2, 1e-1])
    with pytest.raises(ValueError):
        harness.SweepSpec(base, "eps", [1e-2], ["nonsense"])


def test_single_value_sweep():
    base = harness.gravity_box(n_steps=2, cells=(8, 8))
    res = harness.run_sweep(harness.SweepSpec(base, "eps", [1e-2]))
    assert len(res.rows) == 1 and res.fits.get("neg_pressure_slope") is None
    assert res.error is None


def test_sweep_keeps_partial_results():
    base = harness.gravity_box(n_steps=2, cells=(8, 8), picard_max_iter=2)
    res = harness.run_sweep(harness.SweepSpec(base, "eps", [1e-1, 1e-4]))
    assert res.error is not None and not res.passed


def test_contraction_zero_and_refusal():
    cfg = harness.gravity_box(n_steps=3, cells=(8, 8))
    res = harness.contraction_test(cfg, amplitude=0.0)
    assert not np.any(res.differences)
    with pytest.raises(ValueError):
        harness.contraction_test(cfg, perturb="f")


def test_short_contraction_decays():
    g = Grid((8, 8))
    cfg = harness.gravity_box(n_steps=20, cells=(8, 8), f=(0.0, 0.0),
                              u_init=harness.vortex_velocity(g, 0.1))
    res = harness.contraction_test(cfg, amplitude=1e-6)
    assert res.max_relative_growth <= 1e-3 and res.final_ratio < 1


def test_oracle_zero_state_and_small_eps():
    g = Grid((4, 4))
    zero = SimulationConfig(g, t_end=1e-3, dt=1e-3, eps=0.1)
    assert harness.oracle_check(zero).gap == 0.0
    small = SimulationConfig(g, t_end=1e-3, dt=1e-3, eps=1e-4, f=(1.0, 0.0))
    assert harness.oracle_check(small).gap <= 1e-6


def test_oracle_rejects_large_grid():
    cfg = SimulationConfig(Grid((6, 6)), t_end=1e-3, dt=1e-3)
    with pytest.raises(ValueError, match="at most 5"):
        harness.oracle_check(cfg)


def test_criterion_line_format():
    res = harness.CriterionResult(3, "zero fixed point", True, "ok", "bitwise", 0.1)
    assert res.line().startswith("[PASS] criterion  3 zero fixed point")


def test_sweep_independent_of_parallelism():
    base = harness.gravity_box(n_steps=3, cells=(8, 8))
    spec = harness.SweepSpec(base, "eps", [1e-1, 1e-2, 1e-3])
    serial = harness.run_sweep(spec, workers=1)
    parallel = harness.run_sweep(spec, workers=3)

    def strip(rows):
        return [{k: v for k, v in r.items() if k != "seconds"} for r in rows]

    assert strip(serial.rows) == strip(parallel.rows)
