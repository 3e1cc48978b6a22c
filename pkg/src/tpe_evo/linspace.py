"""Finite-dimensional Hilbert spaces and the bounded-operator algebra on them.

An :class:`HSpace` carries an explicit Gram matrix, either as a 1-D array of
diagonal weights (lumped quadrature on a grid) or as a dense Hermitian
positive-definite matrix. A :class:`LinOp` is a matrix between two spaces;
adjoints, real parts, norms and positivity constants are all taken with
respect to the Gram inner products, ``<x, y> = x^H G y``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .config import EIG_TOL, PIVOT_TOL
from .utils import DimensionError, NumericalError, PreconditionError, ShapeError

logger = logging.getLogger(__name__)

Matrix = Union[np.ndarray, sp.spmatrix]


def as_array(mat: Matrix) -> np.ndarray:
    if sp.issparse(mat):
        return mat.toarray()
    return np.asarray(mat)


@dataclass(frozen=True, eq=False)
class HSpace:
    dim: int
    gram: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        gram = np.asarray(self.gram)
        object.__setattr__(self, "gram", gram)
        if self.dim < 0:
            raise DimensionError(f"{self.label or 'space'}: negative dimension {self.dim}")
        if gram.ndim == 1:
            if gram.shape[0] != self.dim:
                raise DimensionError(
                    f"{self.label or 'space'}: {gram.shape[0]} weights for dimension {self.dim}"
                )
            if self.dim and not np.all(np.real(gram) > 0.0):
                raise PreconditionError(f"{self.label or 'space'}: Gram weights must be positive")
        elif gram.ndim == 2:
            if gram.shape != (self.dim, self.dim):
                raise DimensionError(
                    f"{self.label or 'space'}: Gram of shape {gram.shape} for dimension {self.dim}"
                )
            if self.dim:
                scale = max(1.0, float(np.max(np.abs(gram))))
                if np.max(np.abs(gram - gram.conj().T)) > 1e-12 * scale:
                    raise PreconditionError(f"{self.label or 'space'}: Gram matrix is not Hermitian")
                _ = self.factor  # raises on indefinite Gram
        else:
            raise DimensionError(f"{self.label or 'space'}: Gram must be 1-D weights or a square matrix")

    @classmethod
    def euclidean(cls, dim: int, label: str = "") -> "HSpace":
        return cls(dim=dim, gram=np.ones(dim), label=label)

    @classmethod
    def weighted(cls, weights: Sequence[float], label: str = "") -> "HSpace":
        weights = np.asarray(weights, dtype=float)
        return cls(dim=int(weights.shape[0]), gram=weights, label=label)

    @property
    def is_diagonal(self) -> bool:
        return self.gram.ndim == 1

    @cached_property
    def factor(self) -> np.ndarray:
        """Lower Cholesky factor L with G = L L^H (square-root weights when diagonal)."""
        if self.is_diagonal:
            return np.sqrt(self.gram)
        try:
            return np.linalg.cholesky(self.gram)
        except np.linalg.LinAlgError as exc:
            raise PreconditionError(f"{self.label or 'space'}: Gram matrix is not positive-definite") from exc

    def gram_matrix(self) -> Matrix:
        if self.is_diagonal:
            return sp.diags(self.gram, format="csr")
        return self.gram

    def apply_gram(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if self.is_diagonal:
            return self.gram.reshape((-1,) + (1,) * (x.ndim - 1)) * x
        return self.gram @ x

    def solve_gram(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if self.is_diagonal:
            return x / self.gram.reshape((-1,) + (1,) * (x.ndim - 1))
        return sla.cho_solve((self.factor, True), x)

    def inner(self, x: np.ndarray, y: np.ndarray) -> complex:
        return complex(np.vdot(np.asarray(x), self.apply_gram(y)))

    def norm(self, x: np.ndarray) -> float:
        return math.sqrt(max(self.inner(x, x).real, 0.0))

    def to_ortho(self, x: np.ndarray) -> np.ndarray:
        """Coordinates in a G-orthonormal basis: L^H x."""
        x = np.asarray(x)
        if self.is_diagonal:
            return self.factor.reshape((-1,) + (1,) * (x.ndim - 1)) * x
        return self.factor.conj().T @ x

    def from_ortho(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y)
        if self.is_diagonal:
            return y / self.factor.reshape((-1,) + (1,) * (y.ndim - 1))
        return sla.solve_triangular(self.factor.conj().T, y, lower=False)


def direct_sum(spaces: Sequence[HSpace], label: str = "") -> HSpace:
    if all(space.is_diagonal for space in spaces):
        weights = np.concatenate([space.gram for space in spaces]) if spaces else np.ones(0)
        return HSpace(dim=int(weights.shape[0]), gram=weights, label=label)
    blocks = [np.diag(space.gram) if space.is_diagonal else space.gram for space in spaces]
    gram = sla.block_diag(*blocks)
    return HSpace(dim=gram.shape[0], gram=gram, label=label)


@dataclass(frozen=True, eq=False)
class LinOp:
    src: HSpace
    dst: HSpace
    mat: Matrix

    def __post_init__(self) -> None:
        if not sp.issparse(self.mat):
            arr = np.asarray(self.mat)
            if arr.size == 0 and self.dst.dim * self.src.dim == 0:
                arr = arr.reshape(self.dst.dim, self.src.dim)
            object.__setattr__(self, "mat", arr)
        shape = tuple(self.mat.shape)
        if shape != (self.dst.dim, self.src.dim):
            raise DimensionError(
                f"operator {self.src.label}->{self.dst.label}: matrix shape {shape} "
                f"does not match ({self.dst.dim}, {self.src.dim})"
            )

    @classmethod
    def identity(cls, space: HSpace) -> "LinOp":
        return cls(space, space, sp.identity(space.dim, format="csr"))

    @classmethod
    def zero(cls, src: HSpace, dst: HSpace) -> "LinOp":
        return cls(src, dst, sp.csr_matrix((dst.dim, src.dim)))

    @property
    def shape(self) -> tuple:
        return (self.dst.dim, self.src.dim)

    @property
    def is_square(self) -> bool:
        return self.src.dim == self.dst.dim

    def dense(self) -> np.ndarray:
        return as_array(self.mat)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape[0] != self.src.dim:
            raise DimensionError(f"vector of length {x.shape[0]} applied to operator on dim {self.src.dim}")
        return np.asarray(self.mat @ x)

    def __matmul__(self, other: "LinOp") -> "LinOp":
        if not isinstance(other, LinOp):
            return NotImplemented
        if other.dst.dim != self.src.dim:
            raise DimensionError(
                f"cannot compose {self.src.label}->{self.dst.label} after "
                f"{other.src.label}->{other.dst.label}"
            )
        return LinOp(other.src, self.dst, self.mat @ other.mat)

    def __add__(self, other: "LinOp") -> "LinOp":
        if not isinstance(other, LinOp):
            return NotImplemented
        if other.shape != self.shape:
            raise DimensionError(f"cannot add operators of shapes {self.shape} and {other.shape}")
        return LinOp(self.src, self.dst, _add(self.mat, other.mat))

    def __sub__(self, other: "LinOp") -> "LinOp":
        return self + (-other)

    def __neg__(self) -> "LinOp":
        return LinOp(self.src, self.dst, -self.mat)

    def __mul__(self, scalar: complex) -> "LinOp":
        if isinstance(scalar, LinOp):
            return NotImplemented
        return LinOp(self.src, self.dst, scalar * self.mat)

    __rmul__ = __mul__


def _add(a: Matrix, b: Matrix) -> Matrix:
    if sp.issparse(a) and sp.issparse(b):
        return (a + b).tocsr()
    return as_array(a) + as_array(b)


def adjoint(a: LinOp) -> LinOp:
    """Hilbert-space adjoint: G_src^{-1} A^H G_dst."""
    if 0 in a.shape:
        return LinOp.zero(a.dst, a.src)
    if a.src.is_diagonal and a.dst.is_diagonal:
        if sp.issparse(a.mat):
            mat = (sp.diags(1.0 / a.src.gram) @ a.mat.conj().T @ sp.diags(a.dst.gram)).tocsr()
        else:
            mat = (a.mat.conj().T * a.dst.gram[None, :]) / a.src.gram[:, None]
        return LinOp(a.dst, a.src, mat)
    mat = a.src.solve_gram(a.dense().conj().T @ as_array(a.dst.gram_matrix()))
    return LinOp(a.dst, a.src, mat)


def _require_square(a: LinOp, what: str) -> None:
    if not a.is_square:
        raise ShapeError(f"{what} requires a square operator, got shape {a.shape}")


def real_part(a: LinOp) -> LinOp:
    """Re a = (a + a*) / 2, selfadjoint by construction."""
    _require_square(a, "real_part")
    return 0.5 * (a + adjoint(a))


def skew_part(a: LinOp) -> LinOp:
    """(a - a*) / 2, so that a = real_part(a) + skew_part(a)."""
    _require_square(a, "skew_part")
    return 0.5 * (a - adjoint(a))


def ortho_matrix(a: LinOp) -> np.ndarray:
    """Dense matrix of ``a`` in Gram-orthonormal coordinates: L_dst^H A L_src^{-H}."""
    dense = a.dense()
    if a.src.is_diagonal:
        right = dense / a.src.factor[None, :]
    else:
        right = sla.solve_triangular(a.src.factor, dense.conj().T, lower=True).conj().T
    return a.dst.to_ortho(right)


def hermitian_eigvals(a: LinOp) -> np.ndarray:
    """Eigenvalues of a selfadjoint operator (its Hermitian part in orthonormal coordinates)."""
    _require_square(a, "hermitian_eigvals")
    if a.src.dim == 0:
        return np.zeros(0)
    m = ortho_matrix(a)
    return np.linalg.eigvalsh(0.5 * (m + m.conj().T))


def positivity_constant(a: LinOp) -> float:
    """Best c0 with Re <x, a x> >= c0 ||x||^2; a >> 0 iff the result exceeds EIG_TOL."""
    eigs = hermitian_eigvals(real_part(a))
    if eigs.size == 0:
        return math.inf
    return float(eigs[0])


def classify_positivity(value: float, tol: float = EIG_TOL) -> str:
    if value > tol:
        return "positive"
    if value > -tol:
        return "indefinite-to-tolerance"
    return "negative"


def is_strictly_positive(a: LinOp, tol: float = EIG_TOL) -> bool:
    return classify_positivity(positivity_constant(a), tol) == "positive"


def operator_norm(a: LinOp) -> float:
    if 0 in a.shape:
        return 0.0
    return float(np.linalg.norm(ortho_matrix(a), 2))


def selfadjoint_residual(a: LinOp) -> float:
    _require_square(a, "selfadjoint_residual")
    if a.src.dim == 0:
        return 0.0
    return float(np.max(np.abs(as_array((a - adjoint(a)).mat)), initial=0.0))


def inverse(a: LinOp, tol: float = PIVOT_TOL) -> LinOp:
    _require_square(a, "inverse")
    if a.src.dim == 0:
        return LinOp(a.dst, a.src, np.zeros((0, 0)))
    dense = a.dense()
    smallest = np.linalg.svd(ortho_matrix(a), compute_uv=False)[-1]
    if smallest <= tol * max(1.0, float(np.max(np.abs(dense)))):
        raise NumericalError(
            f"operator {a.src.label}->{a.dst.label} is singular to tolerance (sigma_min={smallest:.3e})"
        )
    return LinOp(a.dst, a.src, np.linalg.inv(dense))


class InverseBounds(NamedTuple):
    inverse: LinOp
    norm_bound: float
    re_bound: float


def inverse_with_bounds(a: LinOp, c: float) -> InverseBounds:
    """Invert ``a`` with Re a >= c > 0 and certify ||a^-1|| <= 1/c, Re a^-1 >= c ||a||^-2."""
    _require_square(a, "inverse_with_bounds")
    if c <= 0:
        raise PreconditionError(f"positivity constant must be positive, got c={c}")
    measured = positivity_constant(a)
    if measured < c - 1e-12 * max(1.0, abs(c)):
        raise PreconditionError(f"positivity_constant(a)={measured:.6g} is below the requested c={c:.6g}")
    inv = inverse(a)
    norm_bound = 1.0 / c
    a_norm = operator_norm(a)
    re_bound = c / a_norm**2 if a_norm > 0 else math.inf
    inv_norm = operator_norm(inv)
    if inv_norm > norm_bound + 1e-10:
        raise NumericalError(f"||a^-1||={inv_norm:.6g} exceeds the certified bound {norm_bound:.6g}")
    inv_re = positivity_constant(inv)
    if inv_re < re_bound - 1e-10:
        raise NumericalError(f"Re a^-1 >= {inv_re:.6g} falls below the certified bound {re_bound:.6g}")
    return InverseBounds(inv, norm_bound, re_bound)
