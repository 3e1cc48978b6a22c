import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.tpe_evo.mesh import (
    OPERATORS,
    PARTNER,
    build_complex,
    face_flux,
    homog_dimension,
    ibp_boundary_pairing,
    sbp_first_derivative,
)
from src.tpe_evo.utils import DimensionError, ShapeError

grids = st.sampled_from([(2, 2, 2), (3, 2, 4), (4, 0, 0), (3, 3, 0)])


def test_sbp_operator_has_boundary_only_defect():
    d, h = sbp_first_derivative(5, 1.0)
    q = np.diag(h) @ d.toarray()
    expected = np.zeros((6, 6))
    expected[0, 0], expected[-1, -1] = -1.0, 1.0
    np.testing.assert_allclose(q + q.T, expected, atol=1e-14)
    assert h.sum() == pytest.approx(1.0)


def test_sbp_interior_rows_are_central_differences():
    d, _ = sbp_first_derivative(6, 1.5)
    x = np.linspace(0.0, 1.5, 7)
    dense = d.toarray()
    step = 1.5 / 6
    for i in range(1, 6):
        expected = np.zeros(7)
        expected[i - 1], expected[i + 1] = -0.5 / step, 0.5 / step
        np.testing.assert_allclose(dense[i], expected, atol=1e-13)
    # second order in the interior, first order one-sided at the ends
    np.testing.assert_allclose((d @ x**2)[1:-1], 2.0 * x[1:-1], atol=1e-12)
    np.testing.assert_allclose(d @ x, np.ones(7), atol=1e-13)


@pytest.mark.parametrize("cells", [(2, 2, 2), (3, 3, 3), (4, 4, 4)])
def test_complex_identities_are_exact(cells):
    cx = build_complex(cells)
    curl_grad = cx.ops["curl"].mat @ cx.ops["grad"].mat
    div_curl = cx.ops["div"].mat @ cx.ops["curl"].mat
    assert np.max(np.abs(curl_grad.data), initial=0.0) == 0.0
    assert np.max(np.abs(div_curl.data), initial=0.0) == 0.0


def test_derivatives_annihilate_constants_and_rigid_motions(cube3):
    ones = np.ones(cube3.n_nodes)
    assert np.max(np.abs(cube3.ops["grad"].apply(ones))) == 0.0
    x, y, z = cube3.node_coordinates()
    rotation = np.concatenate([-y, x, np.zeros_like(z)])
    assert np.max(np.abs(cube3.ops["sgrad"].apply(rotation))) < 1e-12


def test_linear_fields_are_differentiated_exactly(cube3):
    x, y, z = cube3.node_coordinates()
    u = 2.0 * x - y + 0.5 * z
    np.testing.assert_allclose(
        cube3.ops["grad"].apply(u).reshape(3, -1),
        np.vstack([np.full_like(x, 2.0), np.full_like(x, -1.0), np.full_like(x, 0.5)]),
        atol=1e-12,
    )


@given(grids, st.sampled_from(["grad", "sgrad", "curl"]), st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_duality_on_homogeneous_fields(cells, name, seed):
    cx = build_complex(cells)
    rng = np.random.default_rng(seed)
    op = cx.ops[name]
    u = cx.restrict_to_homog(name, rng.standard_normal(op.src.dim))
    w = rng.standard_normal(op.dst.dim)
    assert abs(ibp_boundary_pairing(cx, name, u, w)) <= 1e-12 * max(1.0, np.linalg.norm(u) * np.linalg.norm(w))


@given(grids, st.integers(0, 2**31 - 1))
@settings(max_examples=20, deadline=None)
def test_duality_on_partner_homogeneous_fields(cells, seed):
    cx = build_complex(cells)
    rng = np.random.default_rng(seed)
    for name in ("grad", "sgrad", "curl"):
        op = cx.ops[name]
        u = rng.standard_normal(op.src.dim)
        w = cx.restrict_to_homog(PARTNER[name], rng.standard_normal(op.dst.dim))
        assert abs(ibp_boundary_pairing(cx, name, u, w)) <= 1e-12 * max(1.0, np.linalg.norm(u) * np.linalg.norm(w))


@given(grids, st.integers(0, 2**31 - 1))
@settings(max_examples=20, deadline=None)
def test_grad_boundary_term_is_the_face_flux(cells, seed):
    cx = build_complex(cells)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(cx.n_nodes)
    w = rng.standard_normal(3 * cx.n_nodes)
    assert ibp_boundary_pairing(cx, "grad", u, w) == pytest.approx(face_flux(cx, u, w), abs=1e-11)


def test_constant_fields_on_unit_box_have_zero_flux(cube3):
    u = np.ones(cube3.n_nodes)
    w = np.ones(3 * cube3.n_nodes)
    assert face_flux(cube3, u, w) == pytest.approx(0.0, abs=1e-14)
    x, _, _ = cube3.node_coordinates()
    # u = x, w = e_x: the x = 1 face carries the unit area
    w_x = np.concatenate([np.ones(cube3.n_nodes), np.zeros(2 * cube3.n_nodes)])
    assert face_flux(cube3, x, w_x) == pytest.approx(1.0, abs=1e-12)


def test_homogeneous_dimensions(cube3):
    interior = 2 ** 3
    assert homog_dimension(cube3, "grad") == interior
    assert homog_dimension(cube3, "sgrad") == 3 * interior
    # div keeps x-components on faces normal to y and z, and so on
    assert homog_dimension(cube3, "div") == 3 * 2 * 4 * 4
    for name in OPERATORS:
        dofs = cube3.boundary_dofs[name]
        assert dofs.size + homog_dimension(cube3, name) == cube3.domain(name).dim


def test_collapsed_axes_form_a_chain():
    cx = build_complex((4, 0, 0))
    assert cx.n_nodes == 5
    assert cx.boundary_nodes().tolist() == [0, 4]
    assert homog_dimension(cx, "grad") == 3


def test_symmetric_gram_doubles_off_diagonal_weights(cube2):
    sym = cube2.spaces["SYM"].gram.reshape(6, -1)
    scalar = cube2.spaces["S"].gram
    np.testing.assert_allclose(sym[:3], np.tile(scalar, (3, 1)))
    np.testing.assert_allclose(sym[3:], 2.0 * np.tile(scalar, (3, 1)))


@pytest.mark.parametrize("cells", [(1, 2, 2), (0, 0, 0), (2, 2)])
def test_degenerate_grids_raise(cells):
    with pytest.raises(DimensionError):
        build_complex(cells)


def test_unknown_operator_and_bad_shapes_raise(cube2):
    with pytest.raises(ShapeError):
        homog_dimension(cube2, "laplace")
    with pytest.raises(ShapeError):
        ibp_boundary_pairing(cube2, "grad", np.zeros(3), np.zeros(3))


def _unit(rng, n):
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def _worst_duality(cells, fields, seed):
    cx = build_complex(cells)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(fields):
        for name in ("grad", "sgrad", "curl"):
            op = cx.ops[name]
            u = cx.restrict_to_homog(name, _unit(rng, op.src.dim))
            w = _unit(rng, op.dst.dim)
            worst = max(worst, abs(ibp_boundary_pairing(cx, name, u, w)))
            u = _unit(rng, op.src.dim)
            w = cx.restrict_to_homog(PARTNER[name], _unit(rng, op.dst.dim))
            worst = max(worst, abs(ibp_boundary_pairing(cx, name, u, w)))
    return worst


@pytest.mark.parametrize("cells", [(2, 2, 2), (3, 3, 3), (4, 4, 4)])
def test_duality_over_many_random_fields(cells):
    assert _worst_duality(cells, 100, seed=sum(cells)) <= 1e-13


@pytest.mark.slow
def test_duality_over_many_random_fields_on_fine_grid():
    assert _worst_duality((6, 6, 6), 100, seed=6) <= 1e-13
