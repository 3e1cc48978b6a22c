import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.tpe_evo.blockform import flatten
from src.tpe_evo.impedance import (
    BoundaryTriple,
    FrequencyPoint,
    assemble_B,
    b_positivity_bounds,
    boundary_blocks,
    flip_order,
    k_inverse_residual,
    k_matrix_formulas,
    real_part_offdiagonal,
    z_samples,
)
from src.tpe_evo.linspace import LinOp, adjoint, positivity_constant
from src.tpe_evo.utils import FrequencyTooSmallError, PreconditionError, ShapeError


def _trivial(dims=(2, 3, 4)):
    return BoundaryTriple.synthetic(dims, np.random.default_rng(0), q_scale=0.0, b_scale=0.0, a_scale=0.0, s_scale=0.0)


def test_k_inverse_residual_on_random_triples():
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(100):
        triple = BoundaryTriple.synthetic((3, 4, 5), rng)
        z = FrequencyPoint(complex(2.0 * triple.alpha_norm + 1.0, 1.0))
        worst = max(worst, k_inverse_residual(triple, z))
    assert worst <= 1e-9


@given(st.integers(0, 2**31 - 1), st.tuples(st.integers(0, 4), st.integers(0, 4), st.integers(0, 4)),
       st.floats(-50.0, 50.0))
@settings(max_examples=40, deadline=None)
def test_k_inverse_on_varied_shapes_and_frequencies(seed, dims, im):
    triple = BoundaryTriple.synthetic(dims, np.random.default_rng(seed))
    z = FrequencyPoint(complex(1.5 * triple.alpha_norm + 0.5, im))
    assert k_inverse_residual(triple, z) <= 1e-9


def test_trivial_triple_gives_identity():
    triple = _trivial()
    z = FrequencyPoint(complex(0.3, 2.0))
    np.testing.assert_allclose(flatten(assemble_B(triple, z)).dense(), np.eye(9), atol=0.0)
    np.testing.assert_allclose(flatten(k_matrix_formulas(triple, z)).dense(), np.eye(9), atol=1e-14)


def test_pure_alpha_triple_scales_the_velocity_slot():
    base = _trivial((1, 1, 1))
    g = base.G_space
    triple = BoundaryTriple(base.g_space, base.c_space, g, base.Q, 2.0 * LinOp.identity(g), base.beta, base.S)
    z = FrequencyPoint(complex(3.0, 4.0))
    k = flatten(k_matrix_formulas(triple, z)).dense()
    assert k[0, 0] == pytest.approx(z.z / (z.z + 2.0))
    assert k[1, 1] == pytest.approx(1.0)
    assert k[2, 2] == pytest.approx(1.0)


def test_b0_is_identity_plus_skew():
    triple = BoundaryTriple.synthetic((3, 4, 5), np.random.default_rng(7))
    b0, alpha_b = boundary_blocks(triple)
    flat = flatten(b0)
    off = flat - LinOp.identity(flat.src)
    np.testing.assert_allclose((off + adjoint(off)).dense(), 0.0, atol=1e-12)
    assert alpha_b is triple.alpha_b


def test_flip_order_reverses_blocks():
    triple = BoundaryTriple.synthetic((1, 2, 3), np.random.default_rng(3))
    b = assemble_B(triple, FrequencyPoint(complex(10.0, 0.0)))
    flipped = flip_order(b)
    assert flipped.names == ("G", "c", "g")
    np.testing.assert_allclose(flipped.block(0, 0).dense(), b.block(2, 2).dense())
    np.testing.assert_allclose(flipped.block(0, 2).dense(), b.block(2, 0).dense())


def test_s_is_skew_by_construction():
    rng = np.random.default_rng(5)
    base = BoundaryTriple.synthetic((2, 3, 2), rng)
    raw = LinOp(base.c_space, base.c_space, rng.standard_normal((3, 3)))
    triple = BoundaryTriple(base.g_space, base.c_space, base.G_space, base.Q, base.alpha_b, base.beta, raw)
    np.testing.assert_allclose((triple.S + adjoint(triple.S)).dense(), 0.0, atol=1e-14)


def test_frequency_below_alpha_norm_is_refused():
    triple = BoundaryTriple.synthetic((2, 2, 3), np.random.default_rng(11), a_scale=5.0)
    with pytest.raises(FrequencyTooSmallError) as info:
        k_matrix_formulas(triple, FrequencyPoint(complex(0.5 * triple.alpha_norm, 1.0)))
    assert "min{1, 1 - ||alpha_b||/nu}" in str(info.value)
    assert isinstance(info.value, PreconditionError)


def test_frequency_point_needs_positive_real_part():
    with pytest.raises(PreconditionError):
        FrequencyPoint(complex(0.0, 1.0))


def test_real_part_of_b_is_block_diagonal():
    rng = np.random.default_rng(9)
    for _ in range(20):
        triple = BoundaryTriple.synthetic((3, 4, 5), rng)
        z = FrequencyPoint(complex(triple.alpha_norm + 0.7, rng.normal(scale=10.0)))
        assert real_part_offdiagonal(triple, z) <= 1e-12


def test_positivity_bounds_at_twice_alpha_norm():
    rng = np.random.default_rng(13)
    for _ in range(50):
        triple = BoundaryTriple.synthetic((2, 3, 4), rng)
        bounds = b_positivity_bounds(triple, 2.0 * triple.alpha_norm)
        assert bounds.reB == pytest.approx(0.5, abs=1e-12)
        assert 0.0 < bounds.reKlower <= bounds.reB


def test_positivity_bounds_without_alpha():
    bounds = b_positivity_bounds(_trivial(), 0.25)
    assert bounds.reB == pytest.approx(1.0)
    assert bounds.reKlower == pytest.approx(1.0)


def test_k_real_part_is_positive_above_alpha_norm():
    triple = BoundaryTriple.synthetic((2, 3, 4), np.random.default_rng(17))
    for point in z_samples(1.1 * triple.alpha_norm + 0.1, triple.alpha_norm):
        assert positivity_constant(flatten(k_matrix_formulas(triple, point))) > 0.0


def test_z_samples_scale_with_alpha_norm():
    points = z_samples(2.0, 3.0, (0.0, 1.0, 10.0))
    assert [p.z for p in points] == [complex(2.0, 0.0), complex(2.0, 4.0), complex(2.0, 40.0)]


def test_mesh_derived_triple_matches_bd_dimensions(cube2):
    from src.tpe_evo.bdspace import bd_space

    triple = BoundaryTriple.mesh_derived(cube2, a_scale=0.5)
    assert triple.dims == (
        bd_space(cube2, "grad").dim, bd_space(cube2, "curl").dim, bd_space(cube2, "sgrad").dim
    )
    assert triple.alpha_norm == pytest.approx(0.5)
    z = FrequencyPoint(complex(1.0, 3.0))
    assert k_inverse_residual(triple, z) <= 1e-9


def test_misshaped_triple_is_rejected():
    base = _trivial((1, 2, 3))
    with pytest.raises(ShapeError):
        BoundaryTriple(base.g_space, base.c_space, base.G_space, base.beta, base.alpha_b, base.beta, base.S)
