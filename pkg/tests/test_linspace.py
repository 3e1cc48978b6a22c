import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from src.tpe_evo.linspace import (
    HSpace,
    LinOp,
    adjoint,
    classify_positivity,
    direct_sum,
    inverse,
    inverse_with_bounds,
    is_strictly_positive,
    operator_norm,
    positivity_constant,
    real_part,
    skew_part,
)
from src.tpe_evo.config import PIVOT_TOL
from src.tpe_evo.utils import DimensionError, NumericalError, PreconditionError, ShapeError


def _dense_space(rng, n, label=""):
    r = rng.standard_normal((n, n))
    return HSpace(n, r @ r.T + n * np.eye(n), label)


def _weighted_space(rng, n, label=""):
    return HSpace.weighted(rng.uniform(0.5, 2.0, n), label)


@given(st.integers(0, 2**31 - 1), st.integers(1, 6), st.integers(1, 6), st.booleans())
@settings(max_examples=30, deadline=None)
def test_adjoint_matches_gram_pairing(seed, n, m, dense_gram):
    rng = np.random.default_rng(seed)
    make = _dense_space if dense_gram else _weighted_space
    src, dst = make(rng, n, "X"), make(rng, m, "Y")
    a = LinOp(src, dst, rng.standard_normal((m, n)))
    x, y = rng.standard_normal(n), rng.standard_normal(m)
    lhs = dst.inner(a.apply(x), y)
    rhs = src.inner(x, adjoint(a).apply(y))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


@given(st.integers(0, 2**31 - 1), st.booleans())
@settings(max_examples=30, deadline=None)
def test_adjoint_reverses_composition(seed, dense_gram):
    rng = np.random.default_rng(seed)
    make = _dense_space if dense_gram else _weighted_space
    x, y, z = make(rng, 3, "X"), make(rng, 4, "Y"), make(rng, 5, "Z")
    a = LinOp(y, z, rng.standard_normal((5, 4)))
    b = LinOp(x, y, rng.standard_normal((4, 3)))
    lhs = adjoint(a @ b).dense()
    rhs = (adjoint(b) @ adjoint(a)).dense()
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(lhs)
    np.testing.assert_allclose(adjoint(adjoint(a)).dense(), a.dense(), rtol=1e-12, atol=1e-13)


@given(st.integers(0, 2**31 - 1), st.booleans())
@settings(max_examples=30, deadline=None)
def test_operator_norm_matches_generalized_eigenvalues(seed, dense_gram):
    rng = np.random.default_rng(seed)
    make = _dense_space if dense_gram else _weighted_space
    src, dst = make(rng, 4, "X"), make(rng, 3, "Y")
    m = rng.standard_normal((3, 4))
    a = LinOp(src, dst, m)
    g_src = src.gram if dense_gram else np.diag(src.gram)
    g_dst = dst.gram if dense_gram else np.diag(dst.gram)
    # ||a||^2 is the largest lambda with m^T G_dst m x = lambda G_src x
    expected = np.sqrt(sla.eigh(m.T @ g_dst @ m, g_src, eigvals_only=True)[-1])
    assert operator_norm(a) == pytest.approx(expected, rel=1e-10)


def test_positivity_constant_of_diagonal_plus_skew():
    space = HSpace.euclidean(2)
    a = LinOp(space, space, np.array([[1.0, 3.0], [-3.0, 2.0]]))
    assert positivity_constant(a) == pytest.approx(1.0, abs=1e-12)
    assert is_strictly_positive(a)
    assert not is_strictly_positive(a - LinOp.identity(space))


def test_real_and_skew_parts_recompose(rng):
    space = _dense_space(rng, 4)
    a = LinOp(space, space, rng.standard_normal((4, 4)))
    recomposed = real_part(a) + skew_part(a)
    np.testing.assert_allclose(recomposed.dense(), a.dense(), atol=1e-12)
    re = real_part(a)
    np.testing.assert_allclose(re.dense(), adjoint(re).dense(), atol=1e-12)


def test_positivity_constant_of_shifted_skew(rng):
    space = HSpace.euclidean(5)
    k = rng.standard_normal((5, 5))
    a = LinOp(space, space, 0.7 * np.eye(5) + (k - k.T))
    assert positivity_constant(a) == pytest.approx(0.7, abs=1e-12)


@given(st.integers(0, 2**31 - 1), st.floats(0.05, 5.0))
@settings(max_examples=100, deadline=None)
def test_inverse_with_bounds_on_accretive_operators(seed, c):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    space = _weighted_space(rng, n)
    p = rng.standard_normal((n, n))
    k = rng.standard_normal((n, n))
    # Gram-selfadjoint PSD part plus Gram-skew part, shifted by c
    g = np.diag(space.gram)
    psd = np.linalg.solve(g, p @ p.T)
    skew = np.linalg.solve(g, k - k.T)
    a = LinOp(space, space, c * np.eye(n) + psd + skew)
    bounds = inverse_with_bounds(a, c)
    assert bounds.norm_bound == pytest.approx(1.0 / c)
    assert operator_norm(bounds.inverse) <= 1.0 / c + 1e-10
    assert positivity_constant(bounds.inverse) >= bounds.re_bound - 1e-10
    np.testing.assert_allclose(bounds.inverse.dense() @ a.dense(), np.eye(n), atol=1e-8)


def test_inverse_with_bounds_rejects_an_optimistic_constant():
    space = HSpace.euclidean(2)
    a = LinOp(space, space, np.diag([1.0, 0.5]))
    with pytest.raises(PreconditionError):
        inverse_with_bounds(a, 0.6)
    with pytest.raises(PreconditionError):
        inverse_with_bounds(a, 0.0)


def test_inverse_of_singular_operator_raises():
    space = HSpace.euclidean(2)
    with pytest.raises(NumericalError):
        inverse(LinOp(space, space, np.array([[1.0, 2.0], [2.0, 4.0]])))


def test_inverse_tolerance_defaults_to_the_pivot_tolerance():
    space = HSpace.euclidean(2)
    with pytest.raises(NumericalError):
        inverse(LinOp(space, space, np.diag([1.0, 0.5 * PIVOT_TOL])))
    inverse(LinOp(space, space, np.diag([1.0, 0.5 * PIVOT_TOL])), tol=0.1 * PIVOT_TOL)
    assert inverse(LinOp(space, space, np.diag([1.0, 4.0]))).dense()[1, 1] == pytest.approx(0.25)


def test_dimension_mismatches_raise():
    x, y = HSpace.euclidean(2), HSpace.euclidean(3)
    with pytest.raises(DimensionError):
        LinOp(x, y, np.zeros((2, 2)))
    a = LinOp(x, y, np.zeros((3, 2)))
    with pytest.raises(DimensionError):
        a @ a
    with pytest.raises(DimensionError):
        a.apply(np.zeros(3))
    with pytest.raises(ShapeError):
        real_part(a)


def test_invalid_gram_is_rejected():
    with pytest.raises(PreconditionError):
        HSpace.weighted([1.0, 0.0])
    with pytest.raises(PreconditionError):
        HSpace(2, np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(DimensionError):
        HSpace(3, np.ones(2))


def test_zero_dimensional_space_is_allowed():
    empty = HSpace.euclidean(0)
    op = LinOp.identity(empty)
    assert positivity_constant(op) == math.inf
    assert operator_norm(LinOp.zero(empty, HSpace.euclidean(2))) == 0.0
    assert inverse(op).shape == (0, 0)


def test_direct_sum_mixes_diagonal_and_dense(rng):
    a = HSpace.weighted([1.0, 2.0])
    b = _dense_space(rng, 2)
    total = direct_sum([a, b])
    assert total.dim == 4
    np.testing.assert_allclose(total.gram[:2, :2], np.diag([1.0, 2.0]))
    np.testing.assert_allclose(total.gram[2:, 2:], b.gram)


def test_ortho_coordinates_are_isometric(rng):
    space = _dense_space(rng, 3)
    x = rng.standard_normal(3)
    assert np.linalg.norm(space.to_ortho(x)) == pytest.approx(space.norm(x))
    np.testing.assert_allclose(space.from_ortho(space.to_ortho(x)), x, atol=1e-12)


@pytest.mark.parametrize(
    "value, expected",
    [(1.0, "positive"), (1e-12, "indefinite-to-tolerance"), (-1e-12, "indefinite-to-tolerance"), (-1.0, "negative")],
)
def test_classify_positivity(value, expected):
    assert classify_positivity(value) == expected
