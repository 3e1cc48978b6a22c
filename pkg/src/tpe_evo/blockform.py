"""Block operators over lists of spaces and the congruence toolkit.

Permutations and symmetric Gauss steps are congruence transforms, so the
inertia (n+, n0, n-) of a selfadjoint block operator is unchanged by every
step; :class:`CongruenceLog` records each step together with the inertia
measured after it and refuses entries that break Sylvester's law.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .config import EIG_TOL
from .linspace import (
    HSpace,
    LinOp,
    adjoint,
    as_array,
    direct_sum,
    hermitian_eigvals,
    inverse,
    positivity_constant,
)
from .utils import NumericalError, PivotError, PreconditionError, ShapeError

logger = logging.getLogger(__name__)

Entry = Union[LinOp, np.ndarray, sp.spmatrix, None]
Inertia = Tuple[int, int, int]


@dataclass(frozen=True, eq=False)
class BlockOp:
    row_spaces: Tuple[HSpace, ...]
    col_spaces: Tuple[HSpace, ...]
    blocks: Tuple[Tuple[Optional[LinOp], ...], ...]
    names: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "row_spaces", tuple(self.row_spaces))
        object.__setattr__(self, "col_spaces", tuple(self.col_spaces))
        if not self.names:
            object.__setattr__(self, "names", tuple(s.label or str(i) for i, s in enumerate(self.row_spaces)))
        if len(self.blocks) != len(self.row_spaces):
            raise ShapeError(f"{len(self.blocks)} block rows for {len(self.row_spaces)} row spaces")
        for i, row in enumerate(self.blocks):
            if len(row) != len(self.col_spaces):
                raise ShapeError(f"block row {i} has {len(row)} entries for {len(self.col_spaces)} columns")
            for j, blk in enumerate(row):
                if blk is None:
                    continue
                if blk.shape != (self.row_spaces[i].dim, self.col_spaces[j].dim):
                    raise ShapeError(
                        f"block ({i},{j}) has shape {blk.shape}, expected "
                        f"({self.row_spaces[i].dim}, {self.col_spaces[j].dim})"
                    )

    @property
    def n_rows(self) -> int:
        return len(self.row_spaces)

    @property
    def n_cols(self) -> int:
        return len(self.col_spaces)

    @property
    def is_square(self) -> bool:
        return self.n_rows == self.n_cols and all(
            r.dim == c.dim for r, c in zip(self.row_spaces, self.col_spaces)
        )

    def block(self, i: int, j: int) -> LinOp:
        blk = self.blocks[i][j]
        if blk is None:
            return LinOp.zero(self.col_spaces[j], self.row_spaces[i])
        return blk

    def is_present(self, i: int, j: int) -> bool:
        return self.blocks[i][j] is not None

    def row_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([s.dim for s in self.row_spaces])]).astype(int)

    def col_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([s.dim for s in self.col_spaces])]).astype(int)

    def split(self, x: np.ndarray) -> List[np.ndarray]:
        offsets = self.col_offsets()
        return [x[offsets[j]:offsets[j + 1]] for j in range(self.n_cols)]

    def apply(self, parts: Sequence[np.ndarray]) -> List[np.ndarray]:
        out: List[np.ndarray] = []
        for i, space in enumerate(self.row_spaces):
            acc = np.zeros(space.dim, dtype=np.result_type(*[np.asarray(p).dtype for p in parts], float))
            for j, blk in enumerate(self.blocks[i]):
                if blk is not None:
                    acc = acc + blk.apply(parts[j])
            out.append(acc)
        return out

    def __add__(self, other: "BlockOp") -> "BlockOp":
        _require_same_structure(self, other)
        grid = []
        for i in range(self.n_rows):
            row = []
            for j in range(self.n_cols):
                a, b = self.blocks[i][j], other.blocks[i][j]
                row.append(a if b is None else b if a is None else a + b)
            grid.append(tuple(row))
        return BlockOp(self.row_spaces, self.col_spaces, tuple(grid), self.names)

    def __mul__(self, scalar: complex) -> "BlockOp":
        grid = tuple(tuple(None if b is None else scalar * b for b in row) for row in self.blocks)
        return BlockOp(self.row_spaces, self.col_spaces, grid, self.names)

    __rmul__ = __mul__

    def __neg__(self) -> "BlockOp":
        return -1.0 * self

    def __sub__(self, other: "BlockOp") -> "BlockOp":
        return self + (-other)


def _require_same_structure(a: BlockOp, b: BlockOp) -> None:
    if [s.dim for s in a.row_spaces] != [s.dim for s in b.row_spaces] or [
        s.dim for s in a.col_spaces
    ] != [s.dim for s in b.col_spaces]:
        raise ShapeError("block operators have different block structures")


def assemble_block(
    rows: Sequence[HSpace],
    cols: Sequence[HSpace],
    entries: Union[Mapping[Tuple[int, int], Entry], Sequence[Sequence[Entry]], None] = None,
    names: Sequence[str] = (),
) -> BlockOp:
    """Block grid from a mapping {(i, j): block} or a nested list; absent entries are exact zeros."""
    grid: List[List[Optional[LinOp]]] = [[None] * len(cols) for _ in rows]
    if entries is None:
        items: List[Tuple[Tuple[int, int], Entry]] = []
    elif isinstance(entries, Mapping):
        items = list(entries.items())
    else:
        items = [((i, j), e) for i, row in enumerate(entries) for j, e in enumerate(row)]
    for (i, j), entry in items:
        if entry is None:
            continue
        if not (0 <= i < len(rows) and 0 <= j < len(cols)):
            raise ShapeError(f"entry ({i},{j}) lies outside a {len(rows)}x{len(cols)} block grid")
        if isinstance(entry, LinOp):
            if entry.shape != (rows[i].dim, cols[j].dim):
                raise ShapeError(
                    f"entry ({i},{j}) has shape {entry.shape}, expected ({rows[i].dim}, {cols[j].dim})"
                )
            grid[i][j] = LinOp(cols[j], rows[i], entry.mat)
        else:
            mat = entry if sp.issparse(entry) else np.atleast_2d(np.asarray(entry))
            if tuple(mat.shape) != (rows[i].dim, cols[j].dim):
                raise ShapeError(
                    f"entry ({i},{j}) has shape {tuple(mat.shape)}, expected ({rows[i].dim}, {cols[j].dim})"
                )
            grid[i][j] = LinOp(cols[j], rows[i], mat)
    return BlockOp(tuple(rows), tuple(cols), tuple(tuple(r) for r in grid), tuple(names))


def block_diagonal(ops: Sequence[LinOp], names: Sequence[str] = ()) -> BlockOp:
    return assemble_block(
        [op.dst for op in ops], [op.src for op in ops], {(i, i): op for i, op in enumerate(ops)}, names
    )


def flatten(b: BlockOp, sparse: bool = True) -> LinOp:
    """The block operator as a single operator on the direct sums."""
    src = direct_sum(b.col_spaces, label="+".join(s.label for s in b.col_spaces))
    dst = direct_sum(b.row_spaces, label="+".join(s.label for s in b.row_spaces))
    ro, co = b.row_offsets(), b.col_offsets()
    rows_idx, cols_idx, data = [], [], []
    for i in range(b.n_rows):
        for j in range(b.n_cols):
            blk = b.blocks[i][j]
            if blk is None or 0 in blk.shape:
                continue
            coo = sp.coo_matrix(blk.mat)
            rows_idx.append(coo.row + ro[i])
            cols_idx.append(coo.col + co[j])
            data.append(coo.data)
    if data:
        dtype = np.result_type(*[d.dtype for d in data])
        mat = sp.csr_matrix(
            (np.concatenate(data).astype(dtype), (np.concatenate(rows_idx), np.concatenate(cols_idx))),
            shape=(dst.dim, src.dim),
        )
    else:
        mat = sp.csr_matrix((dst.dim, src.dim))
    return LinOp(src, dst, mat if sparse else mat.toarray())


def block_adjoint(b: BlockOp) -> BlockOp:
    grid = tuple(
        tuple(None if b.blocks[j][i] is None else adjoint(b.blocks[j][i]) for j in range(b.n_rows))
        for i in range(b.n_cols)
    )
    return BlockOp(b.col_spaces, b.row_spaces, grid, b.names)


def selfadjoint_defect(b: BlockOp) -> float:
    worst = 0.0
    for i in range(b.n_rows):
        for j in range(b.n_cols):
            if b.blocks[i][j] is None and b.blocks[j][i] is None:
                continue
            diff = as_array((b.block(i, j) - adjoint(b.block(j, i))).mat)
            if diff.size:
                worst = max(worst, float(np.max(np.abs(diff))))
    return worst


def _scale(b: BlockOp) -> float:
    scale = 1.0
    for row in b.blocks:
        for blk in row:
            if blk is not None and 0 not in blk.shape:
                scale = max(scale, float(np.max(np.abs(as_array(blk.mat)))))
    return scale


def _require_selfadjoint(b: BlockOp, what: str, tol: float = 1e-10) -> None:
    if not b.is_square:
        raise ShapeError(f"{what} requires a square block structure")
    defect = selfadjoint_defect(b)
    if defect > tol * _scale(b):
        raise PreconditionError(f"{what} requires a selfadjoint operator (defect {defect:.3e})")


def inertia(a: Union[BlockOp, LinOp], tol: float = EIG_TOL) -> Inertia:
    """Signature (n+, n0, n-) of a selfadjoint operator."""
    if isinstance(a, BlockOp):
        _require_selfadjoint(a, "inertia")
        op = flatten(a)
    else:
        op = a
        if not op.is_square:
            raise ShapeError("inertia requires a square operator")
        defect = float(np.max(np.abs(as_array((op - adjoint(op)).mat)), initial=0.0))
        if defect > 1e-10 * max(1.0, float(np.max(np.abs(op.dense()), initial=0.0))):
            raise PreconditionError(f"inertia requires a selfadjoint operator (defect {defect:.3e})")
    eigs = hermitian_eigvals(op)
    n_plus = int(np.sum(eigs > tol))
    n_minus = int(np.sum(eigs < -tol))
    return (n_plus, int(eigs.size) - n_plus - n_minus, n_minus)


@dataclass(frozen=True)
class CongruenceStep:
    kind: str  # "start" | "permutation" | "gauss-step"
    data: Dict[str, object]
    inertia: Inertia
    factors: Tuple[Tuple[int, LinOp], ...] = field(default=(), repr=False, compare=False)
    pivot: int = -1


@dataclass(frozen=True)
class CongruenceLog:
    steps: Tuple[CongruenceStep, ...] = ()

    def extended(self, step: CongruenceStep) -> "CongruenceLog":
        if self.steps and step.inertia != self.steps[0].inertia:
            raise NumericalError(
                f"inertia changed from {self.steps[0].inertia} to {step.inertia} at step "
                f"{len(self.steps)} ({step.kind}); congruence violated"
            )
        return CongruenceLog(self.steps + (step,))

    @property
    def inertias(self) -> List[Inertia]:
        return [s.inertia for s in self.steps]

    def to_dict(self) -> List[Dict[str, object]]:
        return [
            {"kind": s.kind, "data": dict(s.data), "inertia": list(s.inertia)} for s in self.steps
        ]


def permute_congruence(a: BlockOp, perm: Sequence[int]) -> BlockOp:
    """P* a P for the block permutation P: new block (i, j) is old block (perm[i], perm[j])."""
    perm = list(perm)
    if sorted(perm) != list(range(a.n_rows)) or a.n_rows != a.n_cols:
        raise ShapeError(f"invalid block permutation {perm} for a {a.n_rows}x{a.n_cols} block operator")
    grid = tuple(tuple(a.blocks[pi][pj] for pj in perm) for pi in perm)
    return BlockOp(
        tuple(a.row_spaces[p] for p in perm),
        tuple(a.col_spaces[p] for p in perm),
        grid,
        tuple(a.names[p] for p in perm),
    )


def _pivot_inverse(a: BlockOp, k: int, require_positive: bool, hypothesis: str) -> LinOp:
    pivot = a.block(k, k)
    name = a.names[k]
    if pivot.src.dim == 0:
        return inverse(pivot)
    eigs = hermitian_eigvals(pivot)
    if require_positive:
        if eigs[0] <= EIG_TOL:
            raise PivotError(name, hypothesis, f"smallest eigenvalue {eigs[0]:.3e}")
    elif np.min(np.abs(eigs)) <= EIG_TOL:
        raise PivotError(name, hypothesis, f"smallest |eigenvalue| {np.min(np.abs(eigs)):.3e}")
    try:
        return inverse(pivot)
    except NumericalError as exc:
        raise PivotError(name, hypothesis, str(exc)) from exc


def gauss_step(
    a: BlockOp,
    pivot_index: int,
    require_positive: bool = True,
    hypothesis: str = "",
    record_inertia: bool = True,
) -> Tuple[BlockOp, CongruenceStep]:
    """Symmetric Gauss step L a L* eliminating the pivot row and column.

    The remaining blocks become Schur complements a_ij - a_ik a_kk^-1 a_kj.
    """
    _require_selfadjoint(a, "gauss_step")
    k = pivot_index
    if not 0 <= k < a.n_rows:
        raise ShapeError(f"pivot index {k} outside a {a.n_rows}-block operator")
    pivot_inv = _pivot_inverse(a, k, require_positive, hypothesis)
    factors: Dict[int, LinOp] = {}
    for i in range(a.n_rows):
        if i != k and a.blocks[i][k] is not None:
            factors[i] = a.blocks[i][k] @ pivot_inv
    grid: List[List[Optional[LinOp]]] = [list(row) for row in a.blocks]
    for i in range(a.n_rows):
        if i == k:
            continue
        grid[i][k] = None
        grid[k][i] = None
        if i not in factors:
            continue
        for j in range(a.n_cols):
            if j == k or a.blocks[k][j] is None:
                continue
            update = factors[i] @ a.blocks[k][j]
            grid[i][j] = -update if grid[i][j] is None else grid[i][j] - update
    result = BlockOp(a.row_spaces, a.col_spaces, tuple(tuple(r) for r in grid), a.names)
    step = CongruenceStep(
        kind="gauss-step",
        data={"pivot": a.names[k], "eliminated": [a.names[i] for i in sorted(factors)]},
        inertia=inertia(result) if record_inertia else (-1, -1, -1),
        factors=tuple(sorted(factors.items())),
        pivot=k,
    )
    return result, step


def reexpand(reduced: BlockOp, step: CongruenceStep) -> BlockOp:
    """Undo a Gauss step: L^-1 reduced L^-*, with L^-1 = I + sum_i f_i e_i e_k^*."""
    k = step.pivot
    factors = dict(step.factors)
    grid: List[List[Optional[LinOp]]] = [list(row) for row in reduced.blocks]
    pivot = reduced.block(k, k)
    for i, f_i in factors.items():
        grid[i][k] = f_i @ pivot
        grid[k][i] = pivot @ adjoint(f_i)
    for i, f_i in factors.items():
        for j, f_j in factors.items():
            term = f_i @ pivot @ adjoint(f_j)
            grid[i][j] = term if grid[i][j] is None else grid[i][j] + term
    return BlockOp(reduced.row_spaces, reduced.col_spaces, tuple(tuple(r) for r in grid), reduced.names)


def gauss_sweep(
    a: BlockOp, order: Optional[Sequence[int]] = None, require_positive: bool = True
) -> Tuple[BlockOp, CongruenceLog]:
    """Gauss steps on every block but the last in ``order``, leaving a block-diagonal operator.

    With ``require_positive=False`` indefinite pivots are accepted as long as they are invertible.
    """
    order = list(range(a.n_rows)) if order is None else list(order)
    log = CongruenceLog().extended(CongruenceStep("start", {}, inertia(a)))
    current = a
    for k in order[:-1]:
        current, step = gauss_step(current, k, require_positive=require_positive)
        log = log.extended(step)
    return current, log


def diagonal_positivity(a: BlockOp) -> List[float]:
    """positivity_constant of each diagonal block."""
    return [positivity_constant(a.block(i, i)) for i in range(a.n_rows)]
