import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from granflow.fields import (Grid, ScalarField, SymTensorField, VectorField, deviator,
                             divergence, export_field, face_inner, gradient, laplacian,
                             mac_operators, read_field, sym_gradient, tensor_divergence,
                             tensor_norm, tensor_trace, contraction_weights)

INNER = (slice(1, -1), slice(1, -1))


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid((4,))
    with pytest.raises(ValueError):
        Grid((4, 0))
    with pytest.raises(ValueError):
        Grid((4, 4), (1.0, -1.0))
    g = Grid((4, 8), (2.0, 1.0))
    assert g.spacing == (0.5, 0.125)


def test_sym_gradient_linear_field():
    g = Grid((8, 6), (1.0, 1.5))
    u = VectorField.from_function(g, lambda x, y: (x, -y))
    D = sym_gradient(u)
    assert np.allclose(D.component(0, 0)[INNER], 1.0, atol=1e-13)
    assert np.allclose(D.component(1, 1)[INNER], -1.0, atol=1e-13)
    assert np.allclose(D.component(0, 1)[INNER], 0.0, atol=1e-13)


def test_sym_gradient_zero_and_shear():
    g = Grid((8, 8))
    assert not sym_gradient(VectorField.zeros(g)).values.any()
    u = VectorField.from_function(g, lambda x, y: (y, 0 * x))
    D = sym_gradient(u)
    assert np.allclose(D.component(0, 1)[INNER], 0.5, atol=1e-13)
    assert np.allclose(D.component(0, 0)[INNER], 0.0, atol=1e-13)


def test_deviator_examples():
    g3 = Grid((4, 4, 4))
    u = VectorField.from_function(g3, lambda x, y, z: (x, y, z))
    D = sym_gradient(u)
    inner = (slice(1, -1),) * 3
    S = deviator(D, divergence(u), 3)
    assert np.allclose(S.values[(slice(None),) + inner], 0.0, atol=1e-13)
    g = Grid((3, 3))
    traceless = SymTensorField.from_matrix(g, [[2.0, 1.0], [1.0, -2.0]])
    assert np.array_equal(deviator(traceless).values, traceless.values)
    S = deviator(SymTensorField.from_matrix(g, np.diag([1.0, 0.0])))
    assert np.allclose(S.component(0, 0), 0.5) and np.allclose(S.component(1, 1), -0.5)


def test_deviator_rejects_wrong_dim():
    g = Grid((3, 3))
    with pytest.raises(ValueError):
        deviator(SymTensorField.zeros(g), dim=3)


def test_tensor_norm_examples():
    g = Grid((2, 2))
    assert np.allclose(tensor_norm(SymTensorField.from_matrix(g, np.diag([1.0, -1.0]))).values, 1.0)
    assert not tensor_norm(SymTensorField.zeros(g)).values.any()
    shear = SymTensorField.from_matrix(g, [[0.0, 0.5], [0.5, 0.0]])
    # 0.5 * (1/4 + 1/4) = 1/4, square root 1/2
    assert np.allclose(tensor_norm(shear).values, 0.5, rtol=1e-15)


def test_first_order_operators():
    g = Grid((8, 8))
    p = ScalarField.from_function(g, lambda x, y: x + 0 * y)
    gp = gradient(p)
    assert np.allclose(gp.components[0][1:-1, :], 1.0)
    assert np.allclose(gp.components[1][:, 1:-1], 0.0, atol=1e-13)
    u = VectorField.from_function(g, lambda x, y: (x, -y))
    assert np.allclose(divergence(u).values, 0.0, atol=1e-13)
    q = ScalarField.from_function(g, lambda x, y: x ** 2 + 0 * y)
    assert np.allclose(laplacian(q).values[INNER], 2.0, rtol=1e-10)


def test_tensor_divergence_is_negative_adjoint(rng):
    g = Grid((6, 5), (1.0, 0.7))
    u = VectorField.from_interior(g, rng.standard_normal(mac_operators(g).n_u))
    sigma = SymTensorField(g, rng.standard_normal((3,) + g.cells))
    w = contraction_weights(2).reshape(-1, 1, 1)
    lhs = face_inner(tensor_divergence(sigma), u)
    rhs = -g.cell_volume * float(np.sum(w * sigma.values * sym_gradient(u).values))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_face_gradient_is_negative_divergence_transpose(rng):
    g = Grid((5, 4, 3))
    ops = mac_operators(g)
    p = ScalarField(g, rng.standard_normal(g.cells))
    interior = ops.embed.T @ gradient(p).flat()
    assert np.allclose(interior, -(ops.Div.T @ p.values.ravel()), rtol=1e-13)


@settings(max_examples=40, deadline=None)
@given(nx=st.integers(1, 7), ny=st.integers(1, 7), nz=st.integers(0, 4), seed=st.integers(0, 2 ** 32 - 1))
def test_deviator_identity_property(nx, ny, nz, seed):
    cells = (nx, ny) if nz == 0 else (nx, ny, nz)
    g = Grid(cells)
    r = np.random.default_rng(seed)
    u = VectorField.from_interior(g, r.standard_normal(mac_operators(g).n_u))
    D = sym_gradient(u)
    div = tensor_trace(D)
    lhs = tensor_norm(D).values ** 2
    rhs = tensor_norm(deviator(D)).values ** 2 + div.values ** 2 / (2 * g.dim)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-300)


def test_export_round_trip(tmp_path, rng):
    g = Grid((3, 4))
    u = VectorField(g, tuple(rng.standard_normal(g.face_shape(k)) for k in range(2)))
    p = ScalarField(g, rng.standard_normal(g.cells))
    for f, name in ((u, "u.txt"), (p, "p.txt")):
        export_field(f, tmp_path / name)
        back = read_field(tmp_path / name)
        a = f.flat() if isinstance(f, VectorField) else f.values
        b = back.flat() if isinstance(back, VectorField) else back.values
        assert np.array_equal(a, b)


def test_gradient_divergence_adjoint(rng):
    g = Grid((7, 5), (1.0, 0.6))
    u = VectorField.from_interior(g, rng.standard_normal(mac_operators(g).n_u))
    p = ScalarField(g, rng.standard_normal(g.cells))
    lhs = face_inner(gradient(p), u)
    rhs = -g.cell_volume * float(np.sum(p.values * divergence(u).values))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_deviator_is_traceless(rng):
    for cells in ((6, 6), (4, 3, 5)):
        g = Grid(cells)
        D = sym_gradient(VectorField.from_interior(g, rng.standard_normal(mac_operators(g).n_u)))
        tr = np.abs(tensor_trace(deviator(D)).values)
        assert np.all(tr <= 1e-14 * np.maximum(tensor_norm(D).values, 1e-300))
