"""Material law of the thermo-piezo-electromagnetic system and its well-posedness certificate.

Slots of the evolution system, in order:
``v, T, tau_T, E, H, tau_H, theta, q, tau_q`` where theta is the relative
temperature Theta0^-1 theta. M0 follows the block display of the model
literally: the piezo coupling C^-1 e sits between the T and H slots.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .blockform import (
    BlockOp,
    CongruenceLog,
    CongruenceStep,
    assemble_block,
    flatten,
    gauss_step,
    inertia,
    permute_congruence,
)
from .config import EIG_TOL, Z_IMAG_MULTIPLIERS
from .impedance import BoundaryTriple, FrequencyPoint, k_matrix_formulas, z_samples
from .linspace import (
    HSpace,
    LinOp,
    adjoint,
    inverse,
    positivity_constant,
    real_part,
    selfadjoint_residual,
)
from .mesh import SYM_COMPONENTS, SYM_INDEX
from .utils import (
    DimensionError,
    FrequencyTooSmallError,
    NumericalError,
    PivotError,
    PreconditionError,
    ShapeError,
)

logger = logging.getLogger(__name__)

SLOTS = ("v", "T", "tau_T", "E", "H", "tau_H", "theta", "q", "tau_q")
TAU_SLOTS = ("tau_T", "tau_H", "tau_q")
FIELD_SLOTS = tuple(s for s in SLOTS if s not in TAU_SLOTS)
SLOT = {name: k for k, name in enumerate(SLOTS)}

CONDITIONS = ("rho", "C", "m55", "mu_minus", "nu_m44_sigma", "nu_kappa", "nu_alpha")
CONDITION_LABELS = {
    "rho": "rho* >> 0",
    "C": "C >> 0",
    "m55": "m0,55 >> 0",
    "mu_minus": "mu - e*C^-1 e >> 0",
    "nu_m44_sigma": "nu m0,44 + sigma >> 0",
    "nu_kappa": "nu kappa1 + kappa0^-1 >> 0",
    "nu_alpha": "nu > ||alpha_b||",
}


@dataclass(frozen=True, eq=False)
class MaterialData:
    rho: LinOp
    C: LinOp
    e: LinOp
    lam: LinOp
    p: LinOp
    eps: LinOp
    mu: LinOp
    sigma: LinOp
    theta0: LinOp
    gamma0: LinOp
    kappa0_inv: LinOp
    kappa1: LinOp

    def __post_init__(self) -> None:
        sym, vec, sca, disp = self.C.src, self.eps.src, self.gamma0.src, self.rho.src
        expected = {
            "rho": (disp, disp),
            "C": (sym, sym),
            "e": (vec, sym),
            "lam": (sca, sym),
            "p": (sca, vec),
            "eps": (vec, vec),
            "mu": (vec, vec),
            "sigma": (vec, vec),
            "theta0": (sca, sca),
            "gamma0": (sca, sca),
            "kappa0_inv": (vec, vec),
            "kappa1": (vec, vec),
        }
        for name, (src, dst) in expected.items():
            op = getattr(self, name)
            if op.shape != (dst.dim, src.dim):
                raise ShapeError(f"material coefficient {name} has shape {op.shape}, expected ({dst.dim}, {src.dim})")
        for name in ("rho", "eps", "mu", "C", "gamma0"):
            op = getattr(self, name)
            scale = max(1.0, float(np.max(np.abs(op.dense()), initial=0.0)))
            residual = selfadjoint_residual(op)
            if residual > 1e-12 * scale:
                raise PreconditionError(f"material coefficient {name} is not selfadjoint (residual {residual:.3e})")
        try:
            _ = self.C_inv, self.theta0_inv
        except NumericalError as exc:
            raise PreconditionError(f"material data not admissible: {exc}") from exc

    @cached_property
    def C_inv(self) -> LinOp:
        return inverse(self.C)

    @cached_property
    def theta0_inv(self) -> LinOp:
        return inverse(self.theta0)

    @property
    def alpha_m(self) -> LinOp:
        """Heat-capacity factor recovered from gamma0 = Theta0 alpha_m."""
        return self.theta0_inv @ self.gamma0

    @property
    def spaces(self) -> Dict[str, HSpace]:
        return {"S3": self.rho.src, "SYM": self.C.src, "V": self.eps.src, "S": self.gamma0.src}

    def with_(self, **changes: LinOp) -> "MaterialData":
        return replace(self, **changes)


def scalar_spaces() -> Dict[str, HSpace]:
    return {name: HSpace.euclidean(1, name) for name in ("S", "V", "S3", "SYM")}


def _scalar(space_src: HSpace, space_dst: HSpace, value: float) -> LinOp:
    return LinOp(space_src, space_dst, np.array([[float(value)]]))


def scalar_material(spaces: Optional[Dict[str, HSpace]] = None, **values: float) -> MaterialData:
    """Material data on one-dimensional spaces; every coefficient is a 1x1 operator."""
    sp_ = spaces or scalar_spaces()
    defaults = {
        "rho": 1.0, "C": 1.0, "e": 0.0, "lam": 0.0, "p": 0.0, "eps": 1.0, "mu": 1.0,
        "sigma": 0.0, "theta0": 1.0, "gamma0": 1.0, "kappa0_inv": 1.0, "kappa1": 1.0,
    }
    unknown = set(values) - set(defaults)
    if unknown:
        raise ShapeError(f"unknown scalar coefficients: {', '.join(sorted(unknown))}")
    defaults.update(values)
    s, v, d, t = sp_["S"], sp_["V"], sp_["S3"], sp_["SYM"]
    return MaterialData(
        rho=_scalar(d, d, defaults["rho"]),
        C=_scalar(t, t, defaults["C"]),
        e=_scalar(v, t, defaults["e"]),
        lam=_scalar(s, t, defaults["lam"]),
        p=_scalar(s, v, defaults["p"]),
        eps=_scalar(v, v, defaults["eps"]),
        mu=_scalar(v, v, defaults["mu"]),
        sigma=_scalar(v, v, defaults["sigma"]),
        theta0=_scalar(s, s, defaults["theta0"]),
        gamma0=_scalar(s, s, defaults["gamma0"]),
        kappa0_inv=_scalar(v, v, defaults["kappa0_inv"]),
        kappa1=_scalar(v, v, defaults["kappa1"]),
    )


def scalar_sample() -> MaterialData:
    """C=2, e=1, lambda=1, p=0.5, Theta0=1, eps=1, mu=3, gamma0=2 on one-dimensional spaces."""
    return scalar_material(C=2.0, e=1.0, lam=1.0, p=0.5, theta0=1.0, eps=1.0, mu=3.0, gamma0=2.0)


def decoupled_unit(spaces: Optional[Dict[str, HSpace]] = None, sigma: float = 0.0) -> MaterialData:
    """rho* = C = eps = mu = gamma0 = kappa1 = kappa0^-1 = 1, no couplings."""
    sp_ = spaces or scalar_spaces()
    s, v, d, t = sp_["S"], sp_["V"], sp_["S3"], sp_["SYM"]
    one = LinOp.identity
    return MaterialData(
        rho=one(d),
        C=one(t),
        e=LinOp.zero(v, t),
        lam=LinOp.zero(s, t),
        p=LinOp.zero(s, v),
        eps=one(v),
        mu=one(v),
        sigma=sigma * one(v),
        theta0=one(s),
        gamma0=one(s),
        kappa0_inv=one(v),
        kappa1=one(v),
    )


def _nodal(value, n: int, label: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise DimensionError(f"coefficient {label}: expected a scalar or {n} nodal values, got shape {arr.shape}")
    return arr


def material_from_coefficients(spaces: Dict[str, HSpace], coeffs: Mapping[str, object]) -> MaterialData:
    """Mesh material law; scalars broadcast to every node, lists are per-node values.

    Couplings are lambda: theta -> lambda theta I, p: theta -> p theta e_z and
    e: E -> e sym(e_z (x) E). ``elasticity`` is a scalar c (C = c I) or a
    mapping with Lame parameters ``lame_lambda`` and ``lame_mu``.
    """
    s, v, d, t = spaces["S"], spaces["V"], spaces["S3"], spaces["SYM"]
    n = s.dim
    def get(key: str, default: float) -> np.ndarray:
        return _nodal(coeffs.get(key, default), n, key)

    def vec_diag(values: np.ndarray) -> sp.csr_matrix:
        return sp.diags(np.tile(values, 3), format="csr")

    elasticity = coeffs.get("elasticity", 1.0)
    if isinstance(elasticity, Mapping):
        # C T = 2 mu_L T + lambda_L tr(T) I
        lame_l = sp.diags(_nodal(elasticity.get("lame_lambda", 0.0), n, "lame_lambda"))
        lame_m = sp.diags(_nodal(elasticity.get("lame_mu", 0.5), n, "lame_mu"))
        c_blocks = [[None] * 6 for _ in range(6)]
        for r, (i, j) in enumerate(SYM_COMPONENTS):
            for c, (k, m) in enumerate(SYM_COMPONENTS):
                blk = 2.0 * lame_m if r == c else None
                if i == j and k == m:
                    blk = lame_l if blk is None else blk + lame_l
                c_blocks[r][c] = blk
        c_mat = sp.bmat(c_blocks, format="csr")
    else:
        c_mat = sp.diags(np.tile(_nodal(elasticity, n, "elasticity"), 6), format="csr")

    e_val, lam_val, p_val = get("e", 0.0), get("lambda", 0.0), get("p", 0.0)
    zero_nn = sp.csr_matrix((n, n))
    eye_e = sp.diags(e_val)
    # E -> e sym(e_z (x) E): T_xz = e E_x / 2, T_yz = e E_y / 2, T_zz = e E_z
    e_rows = [[zero_nn] * 3 for _ in range(6)]
    e_rows[SYM_INDEX[(0, 2)]][0] = 0.5 * eye_e
    e_rows[SYM_INDEX[(1, 2)]][1] = 0.5 * eye_e
    e_rows[SYM_INDEX[(2, 2)]][2] = eye_e
    e_mat = sp.bmat(e_rows).tocsr()
    lam_mat = sp.vstack([sp.diags(lam_val) if i == j else zero_nn for i, j in SYM_COMPONENTS]).tocsr()
    p_mat = sp.vstack([zero_nn, zero_nn, sp.diags(p_val)]).tocsr()

    theta0 = get("theta0", 1.0)
    if "gamma0" in coeffs:
        gamma0 = get("gamma0", 1.0)
    else:
        gamma0 = theta0 * get("alpha_m", 1.0)

    return MaterialData(
        rho=LinOp(d, d, vec_diag(get("rho", 1.0))),
        C=LinOp(t, t, c_mat),
        e=LinOp(v, t, e_mat),
        lam=LinOp(s, t, lam_mat),
        p=LinOp(s, v, p_mat),
        eps=LinOp(v, v, vec_diag(get("eps", 1.0))),
        mu=LinOp(v, v, vec_diag(get("mu", 1.0))),
        sigma=LinOp(v, v, vec_diag(get("sigma", 0.0))),
        theta0=LinOp(s, s, sp.diags(theta0, format="csr")),
        gamma0=LinOp(s, s, sp.diags(gamma0, format="csr")),
        kappa0_inv=LinOp(v, v, vec_diag(get("kappa0_inv", 1.0))),
        kappa1=LinOp(v, v, vec_diag(get("kappa1", 1.0))),
    )


@dataclass(frozen=True, eq=False)
class SystemLayout:
    spaces: Tuple[HSpace, ...]

    def __post_init__(self) -> None:
        if len(self.spaces) != len(SLOTS):
            raise ShapeError(f"layout needs {len(SLOTS)} slot spaces, got {len(self.spaces)}")

    @classmethod
    def from_parts(cls, d: MaterialData, t: BoundaryTriple) -> "SystemLayout":
        sp_ = d.spaces
        return cls((
            sp_["S3"], sp_["SYM"], t.G_space,
            sp_["V"], sp_["V"], t.c_space,
            sp_["S"], sp_["V"], t.g_space,
        ))

    def space(self, slot: str) -> HSpace:
        return self.spaces[SLOT[slot]]

    @property
    def dims(self) -> List[int]:
        return [s.dim for s in self.spaces]

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.dims)]).astype(int)

    @property
    def total_dim(self) -> int:
        return int(sum(self.dims))

    def slot_range(self, slot: str) -> slice:
        k = SLOT[slot]
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))

    def split(self, x: np.ndarray) -> Dict[str, np.ndarray]:
        return {name: x[..., self.slot_range(name)] for name in SLOTS}

    def to_dict(self) -> List[Dict[str, object]]:
        return [
            {"slot": name, "dim": space.dim, "offset": int(self.offsets[k])}
            for k, (name, space) in enumerate(zip(SLOTS, self.spaces))
        ]


def _check_layout(d: MaterialData, layout: SystemLayout) -> None:
    expected = SystemLayout((
        d.rho.src, d.C.src, layout.spaces[2], d.eps.src, d.mu.src, layout.spaces[5],
        d.gamma0.src, d.kappa1.src, layout.spaces[8],
    ))
    if expected.dims != layout.dims:
        raise ShapeError(f"layout dims {layout.dims} do not match the material spaces {expected.dims}")


def assemble_M0(d: MaterialData, layout: SystemLayout) -> BlockOp:
    _check_layout(d, layout)
    c_inv = d.C_inv
    c_inv_e = c_inv @ d.e
    c_inv_lam_theta = c_inv @ d.lam @ d.theta0
    e_adj = adjoint(d.e)
    b = d.p @ d.theta0 + e_adj @ c_inv_lam_theta
    upper = {
        (SLOT["v"], SLOT["v"]): d.rho,
        (SLOT["T"], SLOT["T"]): c_inv,
        (SLOT["T"], SLOT["H"]): c_inv_e,
        (SLOT["T"], SLOT["theta"]): c_inv_lam_theta,
        (SLOT["E"], SLOT["E"]): d.eps + e_adj @ c_inv_e,
        (SLOT["E"], SLOT["theta"]): b,
        (SLOT["H"], SLOT["H"]): d.mu,
        (SLOT["theta"], SLOT["theta"]): d.gamma0 + adjoint(d.theta0) @ adjoint(d.lam) @ c_inv_lam_theta,
        (SLOT["q"], SLOT["q"]): d.kappa1,
    }
    entries: Dict[Tuple[int, int], LinOp] = dict(upper)
    for (i, j), blk in upper.items():
        if i != j:
            entries[(j, i)] = adjoint(blk)
    return assemble_block(layout.spaces, layout.spaces, entries, SLOTS)


def assemble_M1(d: MaterialData, t: BoundaryTriple, z: FrequencyPoint, layout: SystemLayout) -> BlockOp:
    """sigma at E, kappa0^-1 at q and K(z) on the tau slots (tau_T, tau_H, tau_q)."""
    _check_layout(d, layout)
    k = k_matrix_formulas(t, z)
    tau = [SLOT[s] for s in TAU_SLOTS]
    entries: Dict[Tuple[int, int], LinOp] = {
        (SLOT["E"], SLOT["E"]): d.sigma,
        (SLOT["q"], SLOT["q"]): d.kappa0_inv,
    }
    for a, i in enumerate(tau):
        for b_, j in enumerate(tau):
            entries[(i, j)] = k.block(a, b_)
    return assemble_block(layout.spaces, layout.spaces, entries, SLOTS)


class FluxReconstruction(NamedTuple):
    B: np.ndarray
    D: Optional[np.ndarray]
    eta: Optional[np.ndarray]


def reconstruct_fluxes(d: MaterialData, state: Mapping[str, np.ndarray]) -> FluxReconstruction:
    """B = mu H, D = e* Grad u + eps E + p theta, eta = lambda* Grad u + p* E + alpha_m theta.

    ``theta`` is the temperature; a relative temperature ``theta_rel`` is
    scaled by Theta0. Without ``grad_u`` only B is returned.
    """
    h = np.asarray(state["H"])
    b_field = d.mu.apply(h)
    if "grad_u" not in state or state["grad_u"] is None:
        logger.info("No displacement gradient supplied; reconstructing B only")
        return FluxReconstruction(b_field, None, None)
    grad_u = np.asarray(state["grad_u"])
    e_field = np.asarray(state["E"])
    if "theta" in state:
        theta = np.asarray(state["theta"])
    else:
        theta = d.theta0.apply(np.asarray(state["theta_rel"]))
    d_field = adjoint(d.e).apply(grad_u) + d.eps.apply(e_field) + d.p.apply(theta)
    eta = adjoint(d.lam).apply(grad_u) + adjoint(d.p).apply(e_field) + d.alpha_m.apply(theta)
    return FluxReconstruction(b_field, d_field, eta)


class SchurBlocks(NamedTuple):
    m44: LinOp
    m55: LinOp
    mu_minus: LinOp


def _inverse_named(op: LinOp, hypothesis: str) -> LinOp:
    try:
        return inverse(op)
    except NumericalError as exc:
        raise PivotError(hypothesis.split(" ")[0], hypothesis, str(exc)) from exc


def schur_m44_m55(d: MaterialData) -> SchurBlocks:
    """mu - e*C^-1 e, m55 = gamma0 - a* (mu - e*C^-1 e)^-1 a and m44 = eps + e*C^-1 e - b m55^-1 b*.

    Here a = e*C^-1 lambda Theta0 and b = p Theta0 + e*C^-1 lambda Theta0, both S -> V.
    """
    c_inv = d.C_inv
    e_adj = adjoint(d.e)
    a = e_adj @ c_inv @ d.lam @ d.theta0
    b = d.p @ d.theta0 + a
    mu_minus = d.mu - e_adj @ c_inv @ d.e
    mu_minus_inv = _inverse_named(mu_minus, "mu - e*C^-1 e invertible")
    m55 = d.gamma0 - adjoint(a) @ mu_minus_inv @ a
    m55_inv = _inverse_named(m55, "m0,55 invertible")
    m44 = d.eps + e_adj @ c_inv @ d.e - b @ m55_inv @ adjoint(b)
    return SchurBlocks(m44, m55, mu_minus)


def eddy_current_eps(d: MaterialData) -> LinOp:
    """Permittivity at which m0,44 vanishes: b m55^-1 b* - e*C^-1 e."""
    blocks = schur_m44_m55(d)
    return d.eps - blocks.m44


def eddy_gamma0_prime(d: MaterialData) -> LinOp:
    """gamma0' = gamma0 - a* (mu - e*C^-1 e)^-1 a - b* (eps + e*C^-1 e)^-1 b.

    The non-permuted chain pivots on eps + e*C^-1 e, so it cannot reach the
    eddy-current limit eps = -e*C^-1 e.
    """
    c_inv = d.C_inv
    e_adj = adjoint(d.e)
    a = e_adj @ c_inv @ d.lam @ d.theta0
    b = d.p @ d.theta0 + a
    mu_minus_inv = _inverse_named(d.mu - e_adj @ c_inv @ d.e, "mu - e*C^-1 e invertible")
    eps_plus_inv = _inverse_named(
        d.eps + e_adj @ c_inv @ d.e, "eps + e*C^-1 e invertible (excludes eps = -e*C^-1 e)"
    )
    return d.gamma0 - adjoint(a) @ mu_minus_inv @ a - adjoint(b) @ eps_plus_inv @ b


def _scaled_system(d: MaterialData, t: BoundaryTriple, nu: float, z: FrequencyPoint, layout: SystemLayout) -> BlockOp:
    """(nu M0 + Re M1(z)) / nu."""
    m0 = assemble_M0(d, layout)
    m1 = assemble_M1(d, t, z, layout)
    grid = []
    for i in range(m0.n_rows):
        row = []
        for j in range(m0.n_cols):
            parts = []
            if m0.is_present(i, j):
                parts.append(m0.block(i, j))
            if m1.is_present(i, j) or m1.is_present(j, i):
                parts.append((0.5 / nu) * (m1.block(i, j) + adjoint(m1.block(j, i))))
            if not parts:
                row.append(None)
                continue
            acc = parts[0]
            for extra in parts[1:]:
                acc = acc + extra
            row.append(acc)
        grid.append(tuple(row))
    return BlockOp(m0.row_spaces, m0.col_spaces, tuple(grid), m0.names)


# decoupled part first, then the coupled (T, H, E, theta) part
FIRST_PERMUTATION = tuple(SLOT[s] for s in ("v", "tau_T", "tau_H", "tau_q", "q", "T", "E", "H", "theta"))
# after eliminating T, bring the tail into (T, H, E, theta)
SECOND_PERMUTATION = (0, 1, 2, 3, 4, 5, 7, 6, 8)


def congruence_chain(
    d: MaterialData,
    t: BoundaryTriple,
    nu: float,
    z: Optional[FrequencyPoint] = None,
    layout: Optional[SystemLayout] = None,
) -> Tuple[BlockOp, CongruenceLog]:
    """Replay the permutation and Gauss steps diagonalising (nu M0 + Re M1(z)) / nu.

    Returns the final block operator in the order
    (v, tau_T, tau_H, tau_q, q, T, H, E, theta) whose last three diagonal
    blocks are mu - e*C^-1 e, m0,44 + sigma/nu and m0,55.
    """
    if nu <= t.alpha_norm:
        raise FrequencyTooSmallError(nu, t.alpha_norm)
    z = z or FrequencyPoint(complex(nu, 0.0))
    layout = layout or SystemLayout.from_parts(d, t)
    system = _scaled_system(d, t, nu, z, layout)
    log = CongruenceLog().extended(CongruenceStep("start", {"order": list(system.names)}, inertia(system)))

    current = permute_congruence(system, FIRST_PERMUTATION)
    log = log.extended(CongruenceStep("permutation", {"order": list(current.names)}, inertia(current)))

    current, step = gauss_step(current, current.names.index("T"), hypothesis=CONDITION_LABELS["C"])
    log = log.extended(step)

    current = permute_congruence(current, SECOND_PERMUTATION)
    log = log.extended(CongruenceStep("permutation", {"order": list(current.names)}, inertia(current)))

    current, step = gauss_step(current, current.names.index("H"), hypothesis=CONDITION_LABELS["mu_minus"])
    log = log.extended(step)
    current, step = gauss_step(current, current.names.index("theta"), hypothesis=CONDITION_LABELS["m55"])
    log = log.extended(step)
    return current, log


def chain_final_diagonal(final: BlockOp) -> Tuple[LinOp, LinOp, LinOp]:
    """(H, E, theta) diagonal blocks of a congruence_chain result."""
    names = list(final.names)
    return tuple(final.block(names.index(s), names.index(s)) for s in ("H", "E", "theta"))  # type: ignore[return-value]


def sequential_chain(d: MaterialData) -> Tuple[BlockOp, CongruenceLog]:
    """Non-permuted Gauss chain on the (T, E, H, theta) part of M0.

    Pivots T, E, H in turn and ends in diag(C^-1, eps + e*C^-1 e, mu - e*C^-1 e, gamma0').
    """
    spaces = [d.C.src, d.eps.src, d.mu.src, d.gamma0.src]
    c_inv = d.C_inv
    e_adj = adjoint(d.e)
    c_inv_lam_theta = c_inv @ d.lam @ d.theta0
    b = d.p @ d.theta0 + e_adj @ c_inv_lam_theta
    upper = {
        (0, 0): c_inv,
        (0, 2): c_inv @ d.e,
        (0, 3): c_inv_lam_theta,
        (1, 1): d.eps + e_adj @ c_inv @ d.e,
        (1, 3): b,
        (2, 2): d.mu,
        (3, 3): d.gamma0 + adjoint(d.theta0) @ adjoint(d.lam) @ c_inv_lam_theta,
    }
    entries = dict(upper)
    for (i, j), blk in upper.items():
        if i != j:
            entries[(j, i)] = adjoint(blk)
    current = assemble_block(spaces, spaces, entries, ("T", "E", "H", "theta"))
    log = CongruenceLog().extended(CongruenceStep("start", {"order": list(current.names)}, inertia(current)))
    hypotheses = ("C invertible", "eps + e*C^-1 e invertible", "mu - e*C^-1 e invertible")
    for k, hypothesis in enumerate(hypotheses):
        current, step = gauss_step(current, k, require_positive=False, hypothesis=hypothesis)
        log = log.extended(step)
    return current, log


@dataclass(frozen=True)
class CertifySearch:
    nu0: float = 0.0625
    max_doublings: int = 40
    significant_digits: int = 3
    fixed_nu: Optional[float] = None
    multipliers: Tuple[float, ...] = Z_IMAG_MULTIPLIERS
    tol: float = EIG_TOL

    def __post_init__(self) -> None:
        if self.nu0 <= 0 or (self.fixed_nu is not None and self.fixed_nu <= 0):
            raise PreconditionError("nu search needs positive nu0 and fixed_nu")


@dataclass(frozen=True)
class Certificate:
    accepted: bool
    nu_min: float
    c: float
    conditions: Dict[str, float]
    chain: Optional[CongruenceLog]
    z_samples: Tuple[complex, ...]
    direct_c: Tuple[float, ...] = ()
    route_consistent: bool = True
    violated: Tuple[str, ...] = ()
    search: Tuple[Tuple[float, bool], ...] = ()
    alpha_norm: float = 0.0
    notes: Tuple[str, ...] = field(default=())

    def to_dict(self) -> Dict[str, object]:
        return {
            "accepted": self.accepted,
            "nu_min": self.nu_min,
            "c": self.c,
            "conditions": {
                name: {"label": CONDITION_LABELS[name], "margin": margin}
                for name, margin in self.conditions.items()
            },
            "violated": [CONDITION_LABELS[name] for name in self.violated],
            "chain": self.chain.to_dict() if self.chain is not None else [],
            "z_samples": [complex(z) for z in self.z_samples],
            "z_sampling": "Im z in {0, 1, 10, 100, 1000} * (1 + ||alpha_b||), finite sample",
            "direct_c": list(self.direct_c),
            "route_consistent": self.route_consistent,
            "nu_search": [{"nu": nu, "admissible": ok} for nu, ok in self.search],
            "alpha_b_norm": self.alpha_norm,
            "notes": list(self.notes),
        }

    def validate(self) -> bool:
        """Acceptance implies c > 0 and every recorded margin is positive."""
        if not self.accepted:
            return True
        return self.c > 0 and all(m > 0 for m in self.conditions.values())


def condition_margins(d: MaterialData, t: BoundaryTriple, nu: float, blocks: Optional[SchurBlocks] = None) -> Dict[str, float]:
    margins: Dict[str, float] = {
        "rho": positivity_constant(d.rho),
        "C": positivity_constant(d.C),
    }
    if blocks is None:
        try:
            blocks = schur_m44_m55(d)
        except PivotError as exc:
            logger.info("Schur blocks unavailable: %s", exc)
    if blocks is None:
        margins.update({"m55": -math.inf, "mu_minus": -math.inf, "nu_m44_sigma": -math.inf})
    else:
        margins["m55"] = positivity_constant(blocks.m55)
        margins["mu_minus"] = positivity_constant(blocks.mu_minus)
        margins["nu_m44_sigma"] = positivity_constant(nu * blocks.m44 + d.sigma)
    margins["nu_kappa"] = positivity_constant(nu * d.kappa1 + d.kappa0_inv)
    margins["nu_alpha"] = nu - t.alpha_norm
    return margins


def _admissible(margins: Mapping[str, float], tol: float) -> bool:
    return all(m > tol for m in margins.values())


def direct_positivity(d: MaterialData, t: BoundaryTriple, points: Sequence[FrequencyPoint], layout: SystemLayout) -> List[float]:
    """positivity_constant(Re(z M0 + M1(z))) at each sample."""
    m0 = flatten(assemble_M0(d, layout))
    values = []
    for p in points:
        m1 = flatten(assemble_M1(d, t, p, layout))
        values.append(positivity_constant(real_part(p.z * m0 + m1)))
    return values


def certify(d: MaterialData, t: BoundaryTriple, search: Optional[CertifySearch] = None) -> Certificate:
    search = search or CertifySearch()
    layout = SystemLayout.from_parts(d, t)
    alpha_norm = t.alpha_norm
    try:
        blocks: Optional[SchurBlocks] = schur_m44_m55(d)
    except PivotError as exc:
        logger.warning("Schur complements not available: %s", exc)
        blocks = None

    trace: List[Tuple[float, bool]] = []

    def check(nu: float) -> Tuple[bool, Dict[str, float]]:
        margins = condition_margins(d, t, nu, blocks)
        ok = _admissible(margins, search.tol)
        trace.append((nu, ok))
        return ok, margins

    if search.fixed_nu is not None:
        nu = float(search.fixed_nu)
        ok, margins = check(nu)
    else:
        nu = search.nu0
        ok, margins = check(nu)
        lo = 0.0
        k = 0
        while not ok and k < search.max_doublings:
            lo = nu
            nu *= 2.0
            k += 1
            ok, margins = check(nu)
        if ok and lo > 0:
            hi = nu
            rel = 0.5 * 10.0 ** (1 - search.significant_digits)
            while (hi - lo) > rel * hi:
                mid = 0.5 * (lo + hi)
                mid_ok, _ = check(mid)
                if mid_ok:
                    hi = mid
                else:
                    lo = mid
            nu = hi
            ok, margins = check(nu)

    if not ok:
        violated = tuple(name for name, m in margins.items() if not m > search.tol)
        logger.warning(
            "Certificate rejected at nu=%.6g; violated: %s",
            nu, ", ".join(CONDITION_LABELS[v] for v in violated),
        )
        return Certificate(
            accepted=False,
            nu_min=math.nan,
            c=math.nan,
            conditions=margins,
            chain=None,
            z_samples=(),
            violated=violated,
            search=tuple(trace),
            alpha_norm=alpha_norm,
            notes=(f"worst margins evaluated at nu={nu:.6g}",),
        )

    points = z_samples(nu, alpha_norm, search.multipliers)
    direct = direct_positivity(d, t, points, layout)
    c = min(direct)
    notes: List[str] = []
    chain: Optional[CongruenceLog] = None
    try:
        final, chain = congruence_chain(d, t, nu, points[0], layout)
        diag = [positivity_constant(blk) for blk in chain_final_diagonal(final)]
        if min(diag) <= search.tol:
            notes.append("congruence chain produced a non-positive diagonal block")
    except PivotError as exc:
        notes.append(f"congruence chain failed: {exc}")
    consistent = c > 0 and not notes
    if not consistent:
        logger.warning("Schur route and direct route disagree at nu=%.6g (direct c=%.3e)", nu, c)
    logger.info("Certificate accepted: nu_min=%.6g c=%.6g", nu, c)
    return Certificate(
        accepted=True,
        nu_min=nu,
        c=c,
        conditions=margins,
        chain=chain,
        z_samples=tuple(p.z for p in points),
        direct_c=tuple(direct),
        route_consistent=consistent,
        search=tuple(trace),
        alpha_norm=alpha_norm,
        notes=tuple(notes),
    )
