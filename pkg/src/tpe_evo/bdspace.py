"""Boundary data spaces: graph-orthogonal complements of the homogeneous subspaces.

For an operator D on the complex, the graph Gram is G = M + D^T M' D. The
boundary data space BD(D) is the G-orthogonal complement of the coordinate
subspace that vanishes on the boundary degrees of freedom. Its basis columns
are graph-harmonic extensions of unit boundary values, orthonormalised with
a Cholesky factor of their Gram, so BD coordinates are euclidean.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, NamedTuple, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .linspace import HSpace, LinOp, adjoint, as_array, ortho_matrix
from .mesh import DOMAIN, PARTNER, SpatialComplex, _require_operator
from .utils import NumericalError, ShapeError

logger = logging.getLogger(__name__)

BD_PAIRS = {("grad", "div"), ("div", "grad"), ("curl", "curl"), ("sgrad", "sdiv"), ("sdiv", "sgrad")}
# u = sign * D' D u characterises BD(D) in the continuum
CHARACTERIZATION_SIGN = {"grad": 1.0, "div": 1.0, "sgrad": 1.0, "sdiv": 1.0, "curl": -1.0}


@dataclass(frozen=True, eq=False)
class BDSpace:
    op_name: str
    field_space: HSpace
    graph_gram: sp.csr_matrix
    basis: np.ndarray
    fixed_dofs: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.basis.shape[1])

    @cached_property
    def space(self) -> HSpace:
        return HSpace.euclidean(self.dim, f"BD({self.op_name})")

    @cached_property
    def parent(self) -> HSpace:
        """The field space with the graph inner product."""
        return HSpace(self.field_space.dim, self.graph_gram.toarray(), f"{self.field_space.label}[{self.op_name}]")

    @cached_property
    def inject(self) -> LinOp:
        return LinOp(self.space, self.parent, self.basis)

    @cached_property
    def trace(self) -> LinOp:
        """iota*: graph-adjoint of the injection, read as an operator on the L2 field space."""
        return LinOp(self.field_space, self.space, np.asarray(self.graph_gram.T @ self.basis).T)

    @cached_property
    def extend(self) -> LinOp:
        """iota on the L2 field space."""
        return LinOp(self.space, self.field_space, self.basis)

    def coordinates(self, u: np.ndarray) -> np.ndarray:
        return self.trace.apply(u)

    def orthonormality_residual(self) -> float:
        if self.dim == 0:
            return 0.0
        gram = self.basis.T @ (self.graph_gram @ self.basis)
        return float(np.max(np.abs(gram - np.eye(self.dim))))


def _graph_gram(complex_: SpatialComplex, op_name: str) -> sp.csr_matrix:
    op = complex_.ops[op_name]
    mass = op.src.gram_matrix()
    mass_dst = op.dst.gram_matrix()
    return (mass + op.mat.T @ mass_dst @ op.mat).tocsr()


def complement_space(
    op_name: str, field_space: HSpace, graph_gram: sp.spmatrix, fixed_dofs: Sequence[int]
) -> BDSpace:
    """Graph-orthogonal complement of the subspace vanishing on ``fixed_dofs``."""
    graph_gram = sp.csr_matrix(graph_gram)
    n = field_space.dim
    fixed = np.asarray(fixed_dofs, dtype=int)
    free = np.setdiff1d(np.arange(n), fixed)
    if fixed.size == 0:
        return BDSpace(op_name, field_space, graph_gram, np.zeros((n, 0)), fixed)
    g_ff = graph_gram[free][:, free].tocsc()
    g_fb = graph_gram[free][:, fixed].toarray()
    g_bb = graph_gram[fixed][:, fixed].toarray()
    ext = np.zeros((n, fixed.size))
    ext[fixed, np.arange(fixed.size)] = 1.0
    if free.size:
        lu = spla.splu(g_ff)
        harmonic = -lu.solve(g_fb)
        ext[free, :] = harmonic
        schur = g_bb + g_fb.T @ harmonic
    else:
        schur = g_bb
    try:
        chol = np.linalg.cholesky(0.5 * (schur + schur.T))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"BD({op_name}): boundary Schur complement is not positive-definite") from exc
    basis = sla.solve_triangular(chol, ext.T, lower=True).T
    return BDSpace(op_name, field_space, graph_gram, basis, fixed)


def bd_space(complex_: SpatialComplex, op_name: str) -> BDSpace:
    _require_operator(op_name)
    space = complement_space(
        op_name,
        complex_.spaces[DOMAIN[op_name]],
        _graph_gram(complex_, op_name),
        complex_.boundary_dofs[op_name],
    )
    logger.debug(
        "BD(%s): dim=%d parent=%d orthonormality=%.2e",
        op_name, space.dim, space.field_space.dim, space.orthonormality_residual(),
    )
    return space


def bd_project(space: BDSpace, u: np.ndarray) -> np.ndarray:
    """iota iota* u."""
    u = np.asarray(u)
    if u.shape != (space.field_space.dim,):
        raise ShapeError(f"BD({space.op_name}) projection expects length {space.field_space.dim}, got {u.shape}")
    return space.basis @ (space.basis.T @ (space.graph_gram @ u))


def homog_project(space: BDSpace, u: np.ndarray) -> np.ndarray:
    """Graph-orthogonal projection onto the homogeneous subspace, computed on its own coordinates."""
    u = np.asarray(u)
    n = space.field_space.dim
    free = np.setdiff1d(np.arange(n), space.fixed_dofs)
    out = np.zeros_like(u)
    if free.size:
        g_ff = space.graph_gram[free][:, free].tocsc()
        out[free] = spla.spsolve(g_ff, (space.graph_gram @ u)[free])
    return out


class BDMap(NamedTuple):
    op: LinOp
    unitarity_defect: float
    skew_defect: float


def bd_map(src: BDSpace, dst: BDSpace, complex_: SpatialComplex) -> BDMap:
    """D_BD = iota*_dst D iota_src with unitarity and skewness defects as diagnostics."""
    if (src.op_name, dst.op_name) not in BD_PAIRS:
        raise ShapeError(f"({src.op_name}, {dst.op_name}) is not a boundary-data operator pair")
    op = complex_.ops[src.op_name]
    mat = dst.trace.dense() @ as_array(op.mat @ src.basis) if src.dim and dst.dim else np.zeros((dst.dim, src.dim))
    mapped = LinOp(src.space, dst.space, mat)
    if src.dim and dst.dim:
        m = ortho_matrix(mapped)
        unitarity = float(np.linalg.norm(m.conj().T @ m - np.eye(src.dim), 2))
    else:
        unitarity = 0.0
    skew = 0.0
    if src.op_name == dst.op_name and src.dim:
        skew = float(np.linalg.norm(as_array((mapped + adjoint(mapped)).mat), 2))
    logger.info(
        "%s_BD: dims %d->%d unitarity defect %.3e skew defect %.3e",
        src.op_name, src.dim, dst.dim, unitarity, skew,
    )
    return BDMap(mapped, unitarity, skew)


def bd_ibp_residual(
    complex_: SpatialComplex,
    big_u: np.ndarray,
    u: np.ndarray,
    op_name: str = "grad",
    spaces: Optional[Dict[str, BDSpace]] = None,
) -> float:
    """|pairing(U, u) - pairing(P U, P u)| for the pair (op_name, its partner); P are the BD projectors.

    ``spaces`` may carry prebuilt BD spaces keyed by operator name.
    """
    if op_name not in ("grad", "sgrad", "curl"):
        raise ShapeError(f"integration by parts is stated for grad, sgrad or curl, got '{op_name}'")
    op = complex_.ops[op_name]
    partner = complex_.ops[PARTNER[op_name]]
    big_u = np.asarray(big_u, dtype=float)
    u = np.asarray(u, dtype=float)
    if big_u.shape != (partner.src.dim,) or u.shape != (op.src.dim,):
        raise ShapeError(
            f"expected fields of length {partner.src.dim} and {op.src.dim}, got {big_u.shape} and {u.shape}"
        )
    sign = -1.0 if op_name == "curl" else 1.0

    def pairing(a: np.ndarray, b: np.ndarray) -> float:
        return float(op.src.inner(partner.apply(a), b).real + sign * partner.src.inner(a, op.apply(b)).real)

    spaces = dict(spaces or {})
    for name in (op_name, PARTNER[op_name]):
        if name not in spaces:
            spaces[name] = bd_space(complex_, name)
    bd_big, bd_small = spaces[PARTNER[op_name]], spaces[op_name]
    return abs(pairing(big_u, u) - pairing(bd_project(bd_big, big_u), bd_project(bd_small, u)))


def characterization_defect(space: BDSpace, complex_: SpatialComplex) -> float:
    """Largest relative L2 defect of u = sign D' D u over the basis; nonzero on the boundary nodes."""
    if space.dim == 0:
        return 0.0
    op = complex_.ops[space.op_name]
    partner = complex_.ops[PARTNER[space.op_name]]
    sign = CHARACTERIZATION_SIGN[space.op_name]
    worst = 0.0
    for col in space.basis.T:
        residual = col - sign * partner.apply(op.apply(col))
        worst = max(worst, space.field_space.norm(residual) / max(space.field_space.norm(col), 1e-300))
    logger.debug("BD(%s) characterization defect %.3e", space.op_name, worst)
    return worst
