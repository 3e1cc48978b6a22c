"""Discrete spatial complex on a rectangular box.

All fields are collocated at grid nodes. Along each axis the derivative is the
summation-by-parts operator D = H^-1 Q with H = h diag(1/2, 1, ..., 1, 1/2)
and Q + Q^T = diag(-1, 0, ..., 0, 1); three-dimensional operators are Kronecker
products, so derivatives along different axes commute and curl grad = 0,
div curl = 0 hold as exact sparse identities. The integration-by-parts
defect of every operator pair only involves boundary-node values, which the
homogeneous subspaces set to zero.

Node ordering is x fastest: ``index = ix + nx1 * (iy + ny1 * iz)``.
Symmetric fields store (xx, yy, zz, yz, xz, xy) with off-diagonal weights
doubled so that the Gram inner product is the Frobenius one.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .linspace import HSpace, LinOp
from .utils import DimensionError, ShapeError

logger = logging.getLogger(__name__)

OPERATORS = ("grad", "div", "curl", "sgrad", "sdiv")
PARTNER = {"grad": "div", "div": "grad", "curl": "curl", "sgrad": "sdiv", "sdiv": "sgrad"}
DOMAIN = {"grad": "S", "div": "V", "curl": "V", "sgrad": "S3", "sdiv": "SYM"}
CODOMAIN = {"grad": "V", "div": "S", "curl": "V", "sgrad": "SYM", "sdiv": "S3"}

# (row, column) pair of each stored symmetric component
SYM_COMPONENTS: Tuple[Tuple[int, int], ...] = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
SYM_INDEX = {pair: k for k, pair in enumerate(SYM_COMPONENTS)}
SYM_INDEX.update({(j, i): k for (i, j), k in list(SYM_INDEX.items())})


def sbp_first_derivative(n_cells: int, length: float) -> Tuple[sp.csr_matrix, np.ndarray]:
    """1-D SBP pair (D, h) on n_cells + 1 nodes; a collapsed axis gives D = 0 and weight ``length``."""
    if n_cells == 0:
        return sp.csr_matrix((1, 1)), np.array([float(length)])
    h = length / n_cells
    n = n_cells + 1
    weights = np.full(n, h)
    weights[0] = weights[-1] = 0.5 * h
    q = sp.diags([np.full(n - 1, -0.5), np.full(n - 1, 0.5)], [-1, 1], shape=(n, n), format="lil")
    q[0, 0] = -0.5
    q[n - 1, n - 1] = 0.5
    d = sp.diags(1.0 / weights) @ q.tocsr()
    return d.tocsr(), weights


@dataclass(frozen=True, eq=False)
class SpatialComplex:
    cells: Tuple[int, int, int]
    lengths: Tuple[float, float, float]
    spaces: Dict[str, HSpace]
    ops: Dict[str, LinOp]
    homog: Dict[str, np.ndarray]
    boundary_dofs: Dict[str, np.ndarray]
    axis_derivatives: Tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix] = field(repr=False)
    axis_weights: Tuple[np.ndarray, np.ndarray, np.ndarray] = field(repr=False)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(c + 1 for c in self.cells)  # type: ignore[return-value]

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def active_axes(self) -> List[int]:
        return [k for k in range(3) if self.cells[k] > 0]

    def node_coordinates(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        axes = [
            np.linspace(0.0, self.lengths[k], self.cells[k] + 1) if self.cells[k] else np.zeros(1)
            for k in range(3)
        ]
        z, y, x = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
        return x.ravel(), y.ravel(), z.ravel()

    def boundary_nodes(self) -> np.ndarray:
        return np.flatnonzero(np.any(self.face_masks(), axis=0))

    def face_masks(self) -> np.ndarray:
        """Boolean (3, n_nodes): node lies on a face normal to axis k."""
        masks = np.zeros((3, self.n_nodes), dtype=bool)
        idx = np.unravel_index(np.arange(self.n_nodes), self.shape[::-1])
        per_axis = (idx[2], idx[1], idx[0])
        for k in self.active_axes:
            masks[k] = (per_axis[k] == 0) | (per_axis[k] == self.cells[k])
        return masks

    def domain(self, op_name: str) -> HSpace:
        _require_operator(op_name)
        return self.spaces[DOMAIN[op_name]]

    def codomain(self, op_name: str) -> HSpace:
        _require_operator(op_name)
        return self.spaces[CODOMAIN[op_name]]

    def restrict_to_homog(self, op_name: str, u: np.ndarray) -> np.ndarray:
        """Zero the boundary degrees of freedom of ``u``; the direct homogeneous projector."""
        _require_operator(op_name)
        out = np.array(u, copy=True)
        out[self.boundary_dofs[op_name]] = 0.0
        return out


def _require_operator(op_name: str) -> None:
    if op_name not in OPERATORS:
        raise ShapeError(f"unknown operator '{op_name}', expected one of {', '.join(OPERATORS)}")


def build_complex(cells: Sequence[int], lengths: Sequence[float] = (1.0, 1.0, 1.0)) -> SpatialComplex:
    """Assemble the complex; an axis with 0 cells is collapsed to a single node layer."""
    cells = tuple(int(c) for c in cells)
    lengths = tuple(float(v) for v in lengths)
    if len(cells) != 3 or len(lengths) != 3:
        raise DimensionError(f"cells and lengths need three entries, got {cells} and {lengths}")
    if any(c < 0 or c == 1 for c in cells) or not any(c > 0 for c in cells):
        raise DimensionError(f"degenerate grid {cells}: every active axis needs at least 2 cells")
    if any(not np.isfinite(v) or v <= 0 for v in lengths):
        raise DimensionError(f"box lengths must be positive, got {lengths}")

    pairs = [sbp_first_derivative(c, v) for c, v in zip(cells, lengths)]
    eye = [sp.identity(c + 1, format="csr") for c in cells]
    d1 = [p[0] for p in pairs]
    w1 = [p[1] for p in pairs]
    dx = sp.kron(eye[2], sp.kron(eye[1], d1[0])).tocsr()
    dy = sp.kron(eye[2], sp.kron(d1[1], eye[0])).tocsr()
    dz = sp.kron(d1[2], sp.kron(eye[1], eye[0])).tocsr()
    weights = np.kron(w1[2], np.kron(w1[1], w1[0]))
    n = weights.shape[0]
    zero = sp.csr_matrix((n, n))
    deriv = (dx, dy, dz)

    scalar = HSpace.weighted(weights, "S")
    vector = HSpace.weighted(np.tile(weights, 3), "V")
    displacement = HSpace.weighted(np.tile(weights, 3), "S3")
    sym_weights = np.concatenate([weights if i == j else 2.0 * weights for i, j in SYM_COMPONENTS])
    symmetric = HSpace.weighted(sym_weights, "SYM")

    grad = sp.vstack(deriv).tocsr()
    div = sp.hstack(deriv).tocsr()
    curl = sp.bmat(
        [[zero, -dz, dy], [dz, zero, -dx], [-dy, dx, zero]]
    ).tocsr()
    sgrad_rows = []
    for i, j in SYM_COMPONENTS:
        row = [zero, zero, zero]
        if i == j:
            row[i] = deriv[i]
        else:
            row[i] = 0.5 * deriv[j]
            row[j] = 0.5 * deriv[i]
        sgrad_rows.append(row)
    sgrad = sp.bmat(sgrad_rows).tocsr()
    # sdiv_i = sum_j D_j T_ij
    sdiv_rows = [[zero] * 6 for _ in range(3)]
    for i in range(3):
        for j in range(3):
            sdiv_rows[i][SYM_INDEX[(i, j)]] = deriv[j]
    sdiv = sp.bmat(sdiv_rows).tocsr()

    spaces = {"S": scalar, "V": vector, "S3": displacement, "SYM": symmetric}
    ops = {
        "grad": LinOp(scalar, vector, grad),
        "div": LinOp(vector, scalar, div),
        "curl": LinOp(vector, vector, curl),
        "sgrad": LinOp(displacement, symmetric, sgrad),
        "sdiv": LinOp(symmetric, displacement, sdiv),
    }

    complex_ = SpatialComplex(
        cells=cells,
        lengths=lengths,
        spaces=spaces,
        ops=ops,
        homog={},
        boundary_dofs={},
        axis_derivatives=deriv,
        axis_weights=tuple(w1),  # type: ignore[arg-type]
    )
    boundary_dofs = _boundary_dofs(complex_)
    for name, dofs in boundary_dofs.items():
        complex_.boundary_dofs[name] = dofs
        total = spaces[DOMAIN[name]].dim
        complex_.homog[name] = np.setdiff1d(np.arange(total), dofs)
    logger.debug(
        "Built complex cells=%s lengths=%s nodes=%d boundary=%d",
        cells, lengths, n, boundary_dofs["grad"].size,
    )
    return complex_


def _boundary_dofs(complex_: SpatialComplex) -> Dict[str, np.ndarray]:
    faces = complex_.face_masks()
    on_boundary = np.any(faces, axis=0)
    vector_all = np.concatenate([on_boundary] * 3)
    # div: normal component on its own faces; curl: tangential components
    normal = np.concatenate([faces[c] for c in range(3)])
    tangential = np.concatenate([np.any(np.delete(faces, c, axis=0), axis=0) for c in range(3)])
    sym = np.concatenate([faces[i] | faces[j] for i, j in SYM_COMPONENTS])
    masks = {
        "grad": on_boundary,
        "div": normal,
        "curl": tangential,
        "sgrad": vector_all,
        "sdiv": sym,
    }
    return {name: np.flatnonzero(mask) for name, mask in masks.items()}


def homog_dimension(complex_: SpatialComplex, op_name: str) -> int:
    _require_operator(op_name)
    return int(complex_.homog[op_name].size)


def ibp_boundary_pairing(complex_: SpatialComplex, op_name: str, u: np.ndarray, w: np.ndarray) -> float:
    """Discrete boundary term of the integration-by-parts formula for ``op_name``.

    grad/div and sgrad/sdiv pairs return <D u, w> + <u, D' w>; curl returns
    <curl u, w> - <u, curl w>. ``u`` lives in the domain of ``op_name`` and
    ``w`` in its codomain. The value vanishes when either argument is
    homogeneous.
    """
    _require_operator(op_name)
    op = complex_.ops[op_name]
    partner = complex_.ops[PARTNER[op_name]]
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if u.shape != (op.src.dim,) or w.shape != (op.dst.dim,):
        raise ShapeError(
            f"{op_name} pairing expects fields of length {op.src.dim} and {op.dst.dim}, "
            f"got {u.shape} and {w.shape}"
        )
    sign = -1.0 if op_name == "curl" else 1.0
    return float(op.dst.inner(op.apply(u), w).real + sign * op.src.inner(u, partner.apply(w)).real)


def face_flux(complex_: SpatialComplex, u: np.ndarray, w: np.ndarray) -> float:
    """Face quadrature of u (w . n) over the box boundary, u scalar and w vector nodal fields."""
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float).reshape(3, -1)
    shape_zyx = complex_.shape[::-1]
    total = 0.0
    for k in complex_.active_axes:
        others = [a for a in range(3) if a != k]
        # face weights laid out like the face slice of a zyx-shaped field
        face_w = np.multiply.outer(complex_.axis_weights[others[1]], complex_.axis_weights[others[0]])
        field = (u * w[k]).reshape(shape_zyx)
        axis_in_zyx = 2 - k
        low = np.take(field, 0, axis=axis_in_zyx)
        high = np.take(field, complex_.cells[k], axis=axis_in_zyx)
        total += float(np.sum(face_w * (high - low)))
    return total
