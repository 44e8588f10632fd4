import logging

import numpy as np
import pytest

from granflow.errors import CFLError, PhiBoundError
from granflow.fields import Grid, ScalarField, VectorField, mac_operators
from granflow.phi_dynamics import (PhiParams, check_bounds, convection_matrix, h1_budget,
                                   neumann_laplacian, phi_step, skew_inertia)
from granflow.stepper import face_average

PARAMS = PhiParams(0.3, 0.6, 0.05)


def _zero(g):
    return VectorField.zeros(g), ScalarField.zeros(g)


def test_params_validation():
    with pytest.raises(ValueError):
        PhiParams(0.3, 0.6, 0.5)
    with pytest.raises(ValueError):
        PhiParams(0.6, 0.3, 0.1)
    assert PARAMS.upper == pytest.approx(0.55)


def test_constant_is_steady():
    g = Grid((8, 8))
    u, p = _zero(g)
    phi = ScalarField(g, np.full(g.cells, 0.45))
    assert np.all(phi_step(phi, u, p, PARAMS, 1e-2).values == 0.45)


def test_cosine_mode_decays_at_its_eigenvalue():
    g = Grid((8, 8))
    u, p = _zero(g)
    x, y = g.cell_centers()
    mode = np.cos(np.pi * x) * np.cos(np.pi * y)
    h = g.spacing[0]
    lam = 2 * (2 - 2 * np.cos(np.pi / 8)) / h ** 2
    assert np.allclose(neumann_laplacian(g) @ mode.ravel(), -lam * mode.ravel())
    phi = ScalarField(g, 0.45 + 0.01 * mode)
    dt = 1e-2
    amps = []
    for _ in range(3):
        phi = phi_step(phi, u, p, PARAMS, dt)
        amps.append(np.abs(phi.values - 0.45).max())
    factor = 1.0 / (1.0 + dt * PARAMS.xi * lam)
    amp0 = 0.01 * np.abs(mode).max()
    assert np.allclose(np.array(amps), amp0 * factor ** np.arange(1, 4), rtol=1e-10)
    assert amps[0] > amps[1] > amps[2]


def test_advection_conserves_mass_before_sink():
    g = Grid((10, 10))
    u = VectorField.from_function(g, lambda x, y: (0.7 + 0 * x, -0.4 + 0 * y), enforce_bc=True)
    p = ScalarField(g, np.full(g.cells, 0.2))
    vals = np.full(g.cells, 0.35)
    vals[4, 5] = 0.5
    phi = ScalarField(g, vals)
    _, parts = phi_step(phi, u, p, PhiParams(0.3, 0.6, 1e-3), 1e-2, strict=False, return_parts=True)
    assert abs(parts.advected.sum() - vals.sum()) <= 1e-12 * vals.sum()


def test_cfl_violation_raises():
    g = Grid((4, 4))
    u = VectorField.from_function(g, lambda x, y: (100 + 0 * x, 0 * y), enforce_bc=True)
    with pytest.raises(CFLError):
        phi_step(ScalarField(g, np.full(g.cells, 0.4)), u, ScalarField.zeros(g), PARAMS, 1e-2)


def test_bound_violation_strict_and_logged(caplog):
    g = Grid((3, 3))
    vals = np.full(g.cells, 0.4)
    vals[1, 2] = 0.59
    with pytest.raises(PhiBoundError, match=r"\(1, 2\)"):
        check_bounds(vals, PARAMS, time=0.1)
    with caplog.at_level(logging.WARNING):
        assert not check_bounds(vals, PARAMS, time=0.1, strict=False)
    rec = caplog.records[-1]
    assert rec.cell == (1, 2) and rec.value == pytest.approx(0.59) and rec.time == 0.1


def test_h1_budget_single_step(rng):
    g = Grid((12, 12))
    ops = mac_operators(g)
    u = VectorField.from_interior(g, 0.2 * rng.standard_normal(ops.n_u))
    p = ScalarField(g, rng.random(g.cells))
    phi = ScalarField(g, 0.35 + 0.15 * rng.random(g.cells))
    new, parts = phi_step(phi, u, p, PARAMS, 1e-3, strict=False, return_parts=True)
    lhs, rhs = h1_budget(phi, new, u, p, PARAMS, 1e-3, sunk=parts.sunk)
    assert lhs <= rhs


def test_convection_matrix_is_skew(rng):
    g = Grid((5, 4, 3))
    w = rng.standard_normal(mac_operators(g).n_u)
    C = convection_matrix(g, w)
    assert abs(C + C.T).max() == 0.0


def test_skew_inertia_zero_velocity():
    g = Grid((5, 5))
    phi = ScalarField(g, np.full(g.cells, 0.4))
    u = VectorField.zeros(g)
    assert not skew_inertia(phi, u, u, 1e-2).flat().any()


def test_skew_inertia_energy_identity(rng):
    g = Grid((6, 5))
    n = mac_operators(g).n_u
    u0 = VectorField.from_interior(g, rng.standard_normal(n))
    u1 = VectorField.from_interior(g, rng.standard_normal(n))
    phi0 = ScalarField(g, 0.3 + 0.2 * rng.random(g.cells))
    phi1 = ScalarField(g, 0.3 + 0.2 * rng.random(g.cells))
    dt = 1e-2
    Dt = skew_inertia(phi1, u1, u0, dt, phi_prev=phi0).interior()
    a, b = u1.interior(), u0.interior()
    f1, f0 = face_average(g, phi1.values), face_average(g, phi0.values)
    lhs = float(np.dot(Dt, a))
    rhs = (0.5 * np.dot(f1, a * a) - 0.5 * np.dot(f0, b * b) + 0.5 * np.dot(f0, (a - b) ** 2)) / dt
    assert lhs == pytest.approx(rhs, rel=1e-12)
