import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.tpe_evo.bdspace import (
    bd_ibp_residual,
    bd_map,
    bd_project,
    bd_space,
    characterization_defect,
    complement_space,
    homog_project,
)
from src.tpe_evo.mesh import OPERATORS, build_complex
from src.tpe_evo.utils import ShapeError


@pytest.fixture(scope="module")
def spaces3(cube3):
    return {name: bd_space(cube3, name) for name in OPERATORS}


def test_dimensions_match_boundary_dofs(cube3, spaces3):
    for name, space in spaces3.items():
        assert space.dim == cube3.boundary_dofs[name].size
        assert space.orthonormality_residual() < 1e-12


def test_chain_grad_space_has_two_end_values():
    cx = build_complex((4, 0, 0))
    space = bd_space(cx, "grad")
    assert space.dim == 2
    assert space.orthonormality_residual() < 1e-12


@given(st.sampled_from(OPERATORS), st.integers(0, 2**31 - 1))
@settings(max_examples=20, deadline=None)
def test_projection_decomposes_every_field(name, seed):
    cx = build_complex((2, 2, 2))
    space = bd_space(cx, name)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(space.field_space.dim)
    pu = bd_project(space, u)
    hu = homog_project(space, u)
    g = space.graph_gram
    np.testing.assert_allclose(bd_project(space, pu), pu, atol=1e-10)
    np.testing.assert_allclose(pu + hu, u, atol=1e-10)
    # the two parts are graph-orthogonal and the homogeneous part vanishes on the boundary
    assert abs(float(pu @ (g @ hu))) < 1e-10 * max(1.0, float(u @ (g @ u)))
    np.testing.assert_array_equal(hu[space.fixed_dofs], 0.0)


def test_homogeneous_fields_project_to_zero(cube3, spaces3, rng):
    for name, space in spaces3.items():
        u = cube3.restrict_to_homog(name, rng.standard_normal(space.field_space.dim))
        assert np.max(np.abs(bd_project(space, u))) < 1e-10


def test_trace_is_graph_adjoint_of_injection(spaces3, rng):
    space = spaces3["curl"]
    u = rng.standard_normal(space.field_space.dim)
    x = rng.standard_normal(space.dim)
    lhs = float(space.coordinates(u) @ x)
    rhs = float(u @ (space.graph_gram @ space.extend.apply(x)))
    assert lhs == pytest.approx(rhs, rel=1e-10)


@pytest.mark.parametrize("name", ["grad", "sgrad", "curl"])
def test_integration_by_parts_only_sees_boundary_data(cube3, spaces3, name, rng):
    op = cube3.ops[name]
    worst = 0.0
    for _ in range(100):
        big_u = rng.standard_normal(op.dst.dim)
        u = rng.standard_normal(op.src.dim)
        big_u /= np.linalg.norm(big_u)
        u /= np.linalg.norm(u)
        worst = max(worst, bd_ibp_residual(cube3, big_u, u, name, spaces3))
    assert worst <= 1e-12


def test_integration_by_parts_builds_missing_spaces(cube2, rng):
    big_u = rng.standard_normal(3 * cube2.n_nodes)
    u = rng.standard_normal(cube2.n_nodes)
    assert bd_ibp_residual(cube2, big_u, u, "grad") < 1e-10


def test_bd_map_pairs_and_diagnostics(cube2):
    spaces = {name: bd_space(cube2, name) for name in OPERATORS}
    grad_bd = bd_map(spaces["grad"], spaces["div"], cube2)
    assert grad_bd.op.shape == (spaces["div"].dim, spaces["grad"].dim)
    assert np.isfinite(grad_bd.unitarity_defect)
    curl_bd = bd_map(spaces["curl"], spaces["curl"], cube2)
    assert curl_bd.op.shape == (spaces["curl"].dim, spaces["curl"].dim)
    assert np.isfinite(curl_bd.skew_defect)
    with pytest.raises(ShapeError):
        bd_map(spaces["grad"], spaces["curl"], cube2)


def test_characterization_defect_is_finite(cube2):
    for name in OPERATORS:
        assert np.isfinite(characterization_defect(bd_space(cube2, name), cube2))


def test_empty_complement(cube2):
    space = complement_space("grad", cube2.spaces["S"], np.eye(cube2.n_nodes), [])
    assert space.dim == 0
    assert space.orthonormality_residual() == 0.0


def test_ibp_residual_rejects_unsupported_operator(cube2):
    with pytest.raises(ShapeError):
        bd_ibp_residual(cube2, np.zeros(cube2.n_nodes), np.zeros(3 * cube2.n_nodes), "div")
