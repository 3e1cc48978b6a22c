"""Impedance boundary block operator B(z) and its closed-form inverse K(z).

B(z) acts on BD(grad) + BD(curl) + BD(Grad) (slots g, c, G). K(z) is stored
in the order the evolution system uses (G, c, g), so K = J B(z)^-1 J with J
the order flip; K33 couples tau_T with the BD(Grad) trace of the velocity.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .bdspace import bd_map, bd_space
from .blockform import BlockOp, assemble_block, flatten
from .config import Z_IMAG_MULTIPLIERS
from .linspace import HSpace, LinOp, adjoint, inverse, operator_norm, ortho_matrix, positivity_constant, skew_part
from .utils import FrequencyTooSmallError, NumericalError, PreconditionError, ShapeError

logger = logging.getLogger(__name__)

B_ORDER = ("g", "c", "G")
K_ORDER = ("G", "c", "g")


@dataclass(frozen=True)
class FrequencyPoint:
    z: complex

    def __post_init__(self) -> None:
        object.__setattr__(self, "z", complex(self.z))
        if not self.z.real > 0:
            raise PreconditionError(f"frequency point needs Re z > 0, got z={self.z}")

    @property
    def nu(self) -> float:
        return self.z.real


@dataclass(frozen=True, eq=False)
class BoundaryTriple:
    """Boundary operators Q: BD(curl)->BD(Grad), alpha_b, beta: BD(grad)->BD(curl) and skew S on BD(curl)."""

    g_space: HSpace
    c_space: HSpace
    G_space: HSpace
    Q: LinOp
    alpha_b: LinOp
    beta: LinOp
    S: LinOp

    def __post_init__(self) -> None:
        expected = {
            "Q": (self.Q, self.c_space, self.G_space),
            "alpha_b": (self.alpha_b, self.G_space, self.G_space),
            "beta": (self.beta, self.g_space, self.c_space),
            "S": (self.S, self.c_space, self.c_space),
        }
        for name, (op, src, dst) in expected.items():
            if op.shape != (dst.dim, src.dim):
                raise ShapeError(f"{name} has shape {op.shape}, expected ({dst.dim}, {src.dim})")
            object.__setattr__(self, name, LinOp(src, dst, op.mat))
        object.__setattr__(self, "S", skew_part(self.S))

    @property
    def dims(self) -> Tuple[int, int, int]:
        return (self.g_space.dim, self.c_space.dim, self.G_space.dim)

    @property
    def alpha_norm(self) -> float:
        return operator_norm(self.alpha_b)

    @classmethod
    def synthetic(
        cls,
        dims: Sequence[int],
        rng: np.random.Generator,
        q_scale: float = 1.0,
        b_scale: float = 1.0,
        a_scale: float = 1.0,
        s_scale: float = 1.0,
    ) -> "BoundaryTriple":
        """Random structured triple on euclidean spaces of dimensions (BD(grad), BD(curl), BD(Grad))."""
        n_g, n_c, n_G = (int(d) for d in dims)
        g_space = HSpace.euclidean(n_g, "BD(grad)")
        c_space = HSpace.euclidean(n_c, "BD(curl)")
        G_space = HSpace.euclidean(n_G, "BD(Grad)")
        raw_s = rng.standard_normal((n_c, n_c))
        return cls(
            g_space,
            c_space,
            G_space,
            Q=LinOp(c_space, G_space, q_scale * rng.standard_normal((n_G, n_c))),
            alpha_b=LinOp(G_space, G_space, a_scale * rng.standard_normal((n_G, n_G))),
            beta=LinOp(g_space, c_space, b_scale * rng.standard_normal((n_c, n_g))),
            S=LinOp(c_space, c_space, s_scale * 0.5 * (raw_s - raw_s.T)),
        )

    @classmethod
    def mesh_derived(
        cls,
        complex_,
        q_scale: float = 1.0,
        b_scale: float = 1.0,
        a_scale: float = 0.5,
        spaces=None,
    ) -> "BoundaryTriple":
        """Triple built from the BD spaces of a spatial complex; S is the skew part of curl_BD."""
        bd_g, bd_c, bd_G = spaces if spaces is not None else (
            bd_space(complex_, "grad"), bd_space(complex_, "curl"), bd_space(complex_, "sgrad")
        )
        # theta -> theta (1, 1, 1) / sqrt(3)
        spread = np.tile(bd_g.basis, (3, 1)) / math.sqrt(3.0)
        beta = b_scale * (bd_c.trace.dense() @ spread) if bd_g.dim else np.zeros((bd_c.dim, 0))
        q = q_scale * (bd_G.trace.dense() @ bd_c.basis)
        curl_bd = bd_map(bd_c, bd_c, complex_).op
        return cls(
            bd_g.space,
            bd_c.space,
            bd_G.space,
            Q=LinOp(bd_c.space, bd_G.space, q),
            alpha_b=a_scale * LinOp.identity(bd_G.space),
            beta=LinOp(bd_g.space, bd_c.space, beta),
            S=LinOp(bd_c.space, bd_c.space, curl_bd.dense()),
        )


def _identity(space: HSpace) -> LinOp:
    return LinOp.identity(space)


def boundary_blocks(t: BoundaryTriple) -> Tuple[BlockOp, LinOp]:
    """z-free part B0 of B(z) (identity in the alpha slot) and alpha_b; B(z) = B0 + diag(0, 0, alpha_b / z)."""
    beta_adj = adjoint(t.beta)
    q_adj = adjoint(t.Q)
    entries = {
        (0, 0): _identity(t.g_space),
        (0, 1): -beta_adj,
        (0, 2): -(beta_adj @ q_adj),
        (1, 0): t.beta,
        (1, 1): _identity(t.c_space),
        (1, 2): -(t.S @ q_adj),
        (2, 0): t.Q @ t.beta,
        (2, 1): -(t.Q @ t.S),
        (2, 2): _identity(t.G_space),
    }
    spaces = [t.g_space, t.c_space, t.G_space]
    return assemble_block(spaces, spaces, entries, B_ORDER), t.alpha_b


def assemble_B(t: BoundaryTriple, z: FrequencyPoint) -> BlockOp:
    b0, alpha_b = boundary_blocks(t)
    spaces = [t.g_space, t.c_space, t.G_space]
    alpha_term = assemble_block(spaces, spaces, {(2, 2): (1.0 / z.z) * alpha_b}, B_ORDER)
    return b0 + alpha_term


def flip_order(b: BlockOp) -> BlockOp:
    """J b J: reverse the block order."""
    n = b.n_rows
    grid = tuple(tuple(b.blocks[n - 1 - i][n - 1 - j] for j in range(n)) for i in range(n))
    return BlockOp(b.row_spaces[::-1], b.col_spaces[::-1], grid, b.names[::-1])


def _checked_inverse(op: LinOp, factor: str) -> LinOp:
    try:
        return inverse(op)
    except NumericalError as exc:
        raise NumericalError(f"factor '{factor}' is singular: {exc}") from exc


def k_matrix_formulas(t: BoundaryTriple, z: FrequencyPoint) -> BlockOp:
    """K(z) = J B(z)^-1 J from the closed-form block expressions, ordered (G, c, g).

    With D = 1 + beta beta*, X = Q beta beta* - Q S and Y = beta beta* Q* - S Q*,
    K33 = (1 + alpha_b/z + Q beta (Q beta)* - X D^-1 Y)^-1 and every other entry
    is written in terms of K33 and D^-1.
    """
    alpha_norm = t.alpha_norm
    if z.nu <= alpha_norm:
        raise FrequencyTooSmallError(z.nu, alpha_norm)
    one_g, one_c, one_G = _identity(t.g_space), _identity(t.c_space), _identity(t.G_space)
    beta, q, s = t.beta, t.Q, t.S
    beta_adj = adjoint(beta)
    q_adj = adjoint(q)
    q_beta = q @ beta
    q_beta_adj = adjoint(q_beta)
    beta_beta = beta @ beta_adj

    d_inv = _checked_inverse(one_c + beta_beta, "1 + beta beta*")
    x = q @ beta_beta - q @ s
    y = beta_beta @ q_adj - s @ q_adj
    k33 = _checked_inverse(
        one_G + (1.0 / z.z) * t.alpha_b + q_beta @ q_beta_adj - x @ d_inv @ y, "K33^-1"
    )
    left = beta_adj @ d_inv @ y - q_beta_adj  # BD(Grad) -> BD(grad)
    right = q_beta - x @ d_inv @ beta  # BD(grad) -> BD(Grad)

    k36 = -(k33 @ x @ d_inv)
    k39 = -(k33 @ right)
    k63 = -(d_inv @ y @ k33)
    k66 = d_inv + d_inv @ y @ k33 @ x @ d_inv
    k69 = -(d_inv @ (beta - y @ k33 @ right))
    k93 = -(left @ k33)
    k96 = -(((q_beta_adj - beta_adj @ d_inv @ y) @ k33 @ x - beta_adj) @ d_inv)
    k99 = one_g - beta_adj @ d_inv @ beta + left @ k33 @ right

    spaces = [t.G_space, t.c_space, t.g_space]
    return assemble_block(
        spaces,
        spaces,
        [[k33, k36, k39], [k63, k66, k69], [k93, k96, k99]],
        K_ORDER,
    )


def k_inverse_residual(t: BoundaryTriple, z: FrequencyPoint) -> float:
    """Frobenius norm of K(z) J B(z) J - I."""
    k = flatten(k_matrix_formulas(t, z)).dense()
    b = flatten(flip_order(assemble_B(t, z))).dense()
    return float(np.linalg.norm(k @ b - np.eye(b.shape[0]), "fro"))


def z_samples(nu: float, alpha_norm: float, multipliers: Sequence[float] = Z_IMAG_MULTIPLIERS) -> List[FrequencyPoint]:
    scale = 1.0 + alpha_norm
    return [FrequencyPoint(complex(nu, m * scale)) for m in multipliers]


class PositivityBounds(NamedTuple):
    reB: float
    reKlower: float


def b_positivity_bounds(
    t: BoundaryTriple, nu: float, samples: Optional[Sequence[FrequencyPoint]] = None
) -> PositivityBounds:
    """reB = 1 - ||alpha_b||/nu and reKlower = reB min_z ||B(z)||^-2, checked on the z samples."""
    if nu <= 0:
        raise PreconditionError(f"nu must be positive, got {nu}")
    alpha_norm = t.alpha_norm
    re_b = 1.0 - alpha_norm / nu
    points = list(samples) if samples is not None else z_samples(nu, alpha_norm)
    b_norm_max = max(operator_norm(flatten(assemble_B(t, p))) for p in points)
    re_k = re_b / b_norm_max**2 if b_norm_max > 0 else re_b
    if re_b <= 0:
        logger.warning("nu=%.6g <= ||alpha_b||=%.6g: boundary bounds are not positive", nu, alpha_norm)
        return PositivityBounds(re_b, re_k)
    for p in points:
        measured_b = positivity_constant(flatten(assemble_B(t, p)))
        if measured_b < re_b - 1e-12:
            raise NumericalError(f"Re B({p.z}) >= {measured_b:.6g} violates the bound {re_b:.6g}")
        measured_k = positivity_constant(flatten(k_matrix_formulas(t, p)))
        if measured_k < re_k - 1e-12:
            raise NumericalError(f"Re K({p.z}) >= {measured_k:.6g} violates the bound {re_k:.6g}")
    return PositivityBounds(re_b, re_k)


def real_part_offdiagonal(t: BoundaryTriple, z: FrequencyPoint) -> float:
    """Largest entry of Re B(z) outside its block diagonal."""
    m = ortho_matrix(flatten(assemble_B(t, z)))
    re = 0.5 * (m + m.conj().T)
    offsets = np.cumsum([0, *t.dims])
    for k in range(3):
        re[offsets[k]:offsets[k + 1], offsets[k]:offsets[k + 1]] = 0.0
    return float(np.max(np.abs(re), initial=0.0))
