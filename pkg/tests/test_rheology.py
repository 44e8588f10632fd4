import numpy as np
import pytest

from granflow.fields import Grid, ScalarField
from granflow.rheology import (RheologyLaw, dilatancy_rhs, i_eq, inertial_number,
                               yield_coefficient)


def _field(value, n=3):
    g = Grid((n, n))
    return ScalarField(g, np.full(g.cells, float(value)))


def test_yield_coefficient_examples():
    law = RheologyLaw.constant(alpha0=1.0)
    assert yield_coefficient(law, 0.45, 3.0) == 1.0
    lin = RheologyLaw.phi_linear(0.3, 0.6)
    assert yield_coefficient(lin, 0.3) == 0.0
    mu = RheologyLaw.mu_of_I(alpha0=0.4)
    assert yield_coefficient(mu, None, 0.0) == pytest.approx(0.4)


def test_dilatancy_examples():
    law = RheologyLaw.constant(alpha0=1.0, beta0=1.0)
    assert np.allclose(dilatancy_rhs(law, _field(1.0), _field(4.0)).values, 0.0)
    lin = RheologyLaw.phi_linear(0.3, 0.6)
    out = dilatancy_rhs(lin, _field(2.0), _field(0.0), _field(0.3))
    assert not out.values.any()
    out = dilatancy_rhs(lin, _field(1.0), _field(1.0), _field(0.5))
    assert np.allclose(out.values, 2 * 0.2 * 1 - 0.1 * 1, rtol=1e-14)


def test_i_eq_examples():
    assert i_eq(0.45, 0.3, 0.6) == pytest.approx(1.0)
    assert i_eq(0.6, 0.3, 0.6) == 0.0
    assert i_eq(0.4, 0.3, 0.6) == pytest.approx(2.0)


def test_inertial_number_examples():
    assert inertial_number(0.0, 4.0) == 0.0
    assert inertial_number(1.0, 4.0) == 1.0
    assert inertial_number(1.0, 4.0, d=0.01, rho0=1.0) == pytest.approx(0.01)
    value, flag = inertial_number(1.0, 0.0, return_flag=True)
    assert np.isinf(value) and flag


def test_law_validation():
    with pytest.raises(ValueError):
        RheologyLaw.phi_linear(0.6, 0.3)
    with pytest.raises(ValueError):
        RheologyLaw("plastic")
    with pytest.raises(ValueError):
        RheologyLaw.mu_of_I(alpha0=0.5, mu=lambda I: 0.5, F=lambda I: 0.6 + 0 * I)


def test_dilatancy_factorization_matches_phi_linear(rng):
    from granflow.rheology import dilatancy_factorization

    phi_min, phi_max = 0.3, 0.6
    n = 10_000
    phi = phi_min + (phi_max - phi_min) * rng.uniform(1e-3, 1.0, n)
    s = rng.uniform(1e-3, 5.0, n)
    p = rng.uniform(1e-3, 10.0, n)
    factored = dilatancy_factorization(phi, s, p, phi_min, phi_max)
    direct = (2 * (phi - phi_min) * s - (phi_max - phi) * np.sqrt(p)) / (phi_max - phi_min)
    assert np.allclose(factored, direct, rtol=1e-12, atol=1e-12 * np.abs(direct).max())


def test_i_eq_identity(rng):
    phi = rng.uniform(0.31, 0.6, 1000)
    out = i_eq(phi, 0.3, 0.6) * (phi - 0.3) + phi
    assert np.allclose(out, 0.6, rtol=0, atol=1e-14)


def test_yield_coefficient_nonnegative(rng):
    lin = RheologyLaw.phi_linear(0.3, 0.6)
    assert np.all(yield_coefficient(lin, rng.uniform(0.3, 0.6, 100)) >= 0)
    mu = RheologyLaw.mu_of_I(alpha0=0.4)
    assert np.all(yield_coefficient(mu, None, rng.uniform(0, 1e3, 100)) >= 0)
