"""Named invariant checks grouped into suites for ``cli verify``."""
from __future__ import annotations

import logging
import math
from typing import Callable, Dict, Iterable, List, NamedTuple, Sequence

import numpy as np

from .bdspace import bd_ibp_residual, bd_map, bd_project, bd_space, homog_project
from .blockform import selfadjoint_defect
from .evosolve import SourceTerm, a_skew_defect, build_system, bump_profile, check_causality, gaussian_pulse, simulate
from .impedance import (
    BoundaryTriple,
    FrequencyPoint,
    b_positivity_bounds,
    k_inverse_residual,
    real_part_offdiagonal,
)
from .linspace import LinOp
from .material import (
    CertifySearch,
    assemble_M0,
    certify,
    chain_final_diagonal,
    congruence_chain,
    decoupled_unit,
    eddy_current_eps,
    SystemLayout,
    scalar_sample,
    schur_m44_m55,
)
from .mesh import OPERATORS, build_complex, homog_dimension, ibp_boundary_pairing
from .utils import ConfigError, make_rng

logger = logging.getLogger(__name__)

SUITES = ("bd", "mesh", "impedance", "material", "evosolve")
MESH_GRIDS = ((2, 2, 2), (3, 3, 3), (4, 4, 4), (6, 6, 6))
BD_GRIDS = ((2, 2, 2), (3, 3, 3))
RANDOM_PAIRS = 100


class CheckRow(NamedTuple):
    name: str
    residual: float
    tolerance: float
    passed: bool


def _row(name: str, residual: float, tolerance: float) -> CheckRow:
    residual = float(residual)
    return CheckRow(name, residual, tolerance, bool(residual <= tolerance))


def _unit(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def _grid_label(cells: Sequence[int]) -> str:
    return "x".join(str(c) for c in cells)


def mesh_suite(seed: int = 0) -> List[CheckRow]:
    rng = make_rng(seed)
    rows: List[CheckRow] = []
    for cells in MESH_GRIDS:
        cx = build_complex(cells)
        label = _grid_label(cells)
        ops = cx.ops
        rows.append(_row(f"mesh[{label}].curl_grad", np.max(np.abs((ops["curl"].mat @ ops["grad"].mat).data), initial=0.0), 0.0))
        rows.append(_row(f"mesh[{label}].div_curl", np.max(np.abs((ops["div"].mat @ ops["curl"].mat).data), initial=0.0), 0.0))
        interior = cx.n_nodes - cx.boundary_nodes().size
        rows.append(_row(f"mesh[{label}].homog_grad_dim", abs(homog_dimension(cx, "grad") - interior), 0.0))
        worst = {"grad": 0.0, "sgrad": 0.0, "curl": 0.0}
        for _ in range(RANDOM_PAIRS):
            for name in worst:
                op = ops[name]
                u = cx.restrict_to_homog(name, _unit(rng, op.src.dim))
                w = _unit(rng, op.dst.dim)
                worst[name] = max(worst[name], abs(ibp_boundary_pairing(cx, name, u, w)))
        for name, value in worst.items():
            rows.append(_row(f"mesh[{label}].duality_{name}", value, 1e-13))
        x, y, z = cx.node_coordinates()
        rotation = np.concatenate([-y + 0.3 * z, x - 0.7 * z, -0.3 * x + 0.7 * y])
        rows.append(_row(f"mesh[{label}].sgrad_rigid", np.max(np.abs(ops["sgrad"].apply(rotation))), 1e-12))
    return rows


def bd_suite(seed: int = 0) -> List[CheckRow]:
    rng = make_rng(seed)
    rows: List[CheckRow] = []
    for cells in BD_GRIDS:
        cx = build_complex(cells)
        label = _grid_label(cells)
        spaces = {name: bd_space(cx, name) for name in OPERATORS}
        for name, space in spaces.items():
            rows.append(_row(f"bd[{label}].{name}.orthonormality", space.orthonormality_residual(), 1e-12))
            u = rng.standard_normal(space.field_space.dim)
            pu = bd_project(space, u)
            graph_norm = math.sqrt(max(float(u @ (space.graph_gram @ u)), 1e-300))
            rows.append(_row(f"bd[{label}].{name}.idempotent", np.max(np.abs(bd_project(space, pu) - pu)) / graph_norm, 1e-12))
            rest = u - pu - homog_project(space, u)
            rows.append(_row(f"bd[{label}].{name}.complement", math.sqrt(abs(float(rest @ (space.graph_gram @ rest)))) / graph_norm, 1e-12))
        for name in ("grad", "sgrad", "curl"):
            partner_dim = cx.ops[name].dst.dim
            worst = 0.0
            for _ in range(RANDOM_PAIRS):
                big_u = _unit(rng, partner_dim)
                u = _unit(rng, cx.ops[name].src.dim)
                worst = max(worst, bd_ibp_residual(cx, big_u, u, name, spaces))
            rows.append(_row(f"bd[{label}].ibp_{name}", worst, 1e-12))
        # unitarity of the BD maps is reported, not asserted
        for src, dst in (("grad", "div"), ("curl", "curl"), ("sgrad", "sdiv")):
            mapped = bd_map(spaces[src], spaces[dst], cx)
            rows.append(_row(f"bd[{label}].{src}_BD.unitarity_defect", mapped.unitarity_defect, math.inf))
    return rows


def impedance_suite(seed: int = 0, trials: int = 20) -> List[CheckRow]:
    rng = make_rng(seed)
    worst_k, worst_re = 0.0, 0.0
    bounds_ok = 0.0
    for _ in range(trials):
        triple = BoundaryTriple.synthetic((3, 4, 5), rng)
        z = FrequencyPoint(complex(2.0 * triple.alpha_norm + 1.0, 1.0))
        worst_k = max(worst_k, k_inverse_residual(triple, z))
        worst_re = max(worst_re, real_part_offdiagonal(triple, z))
        bounds = b_positivity_bounds(triple, 2.0 * triple.alpha_norm)
        bounds_ok = max(bounds_ok, abs(bounds.reB - 0.5))
    return [
        _row("impedance.k_inverse", worst_k, 1e-9),
        _row("impedance.real_part_block_diagonal", worst_re, 1e-12),
        _row("impedance.reB_at_twice_alpha", bounds_ok, 1e-12),
    ]


def material_suite(seed: int = 0) -> List[CheckRow]:
    d = scalar_sample()
    trivial = BoundaryTriple.synthetic((1, 1, 1), make_rng(seed), q_scale=0.0, b_scale=0.0, a_scale=0.0, s_scale=0.0)
    final, log = congruence_chain(d, trivial, 1.0)
    h, e, theta = (float(blk.dense()[0, 0]) for blk in chain_final_diagonal(final))
    blocks = schur_m44_m55(d)
    rows = [
        _row("material.chain_H", abs(h - 2.5), 1e-10),
        _row("material.chain_E", abs(e - (1.5 - 1.0 / 1.9)), 1e-10),
        _row("material.chain_theta", abs(theta - 1.9), 1e-10),
        _row("material.m44_sample", abs(float(blocks.m44.dense()[0, 0]) - (1.5 - 1.0 / 1.9)), 1e-12),
        _row("material.inertia_constant", len(set(log.inertias)) - 1, 0.0),
        _row("material.M0_selfadjoint", selfadjoint_defect(assemble_M0(d, SystemLayout.from_parts(d, trivial))), 1e-13),
    ]
    eddy = d.with_(eps=eddy_current_eps(d))
    rows.append(_row("material.eddy_m44", abs(float(schur_m44_m55(eddy).m44.dense()[0, 0])), 1e-12))
    rejected = certify(eddy, trivial, CertifySearch(fixed_nu=1.0))
    accepted = certify(eddy.with_(sigma=LinOp.identity(eddy.eps.src)), trivial, CertifySearch(fixed_nu=1.0))
    rows.append(_row("material.eddy_sigma0_rejected", float(rejected.accepted), 0.0))
    rows.append(_row("material.eddy_sigma1_accepted", float(not accepted.accepted), 0.0))
    return rows


def evosolve_suite(seed: int = 0) -> List[CheckRow]:
    cx = build_complex((2, 2, 2))
    material = decoupled_unit(cx.spaces)
    system = build_system(cx, material, mode="synthetic", seed=seed)
    rows = [_row("evosolve.A_skew", a_skew_defect(system), 1e-12)]
    dt, n_steps, onset = 0.01, 40, 10
    sources = gaussian_pulse(system.layout, "v", dt, n_steps, onset, width=0.05,
                             profile=bump_profile(cx, 3))
    series = simulate(system, sources, override_certificate=True)
    rows.append(_row("evosolve.causality", check_causality(series), 1e-13))
    zero = simulate(system, SourceTerm.zero(dt, n_steps), override_certificate=True)
    rows.append(_row("evosolve.zero_sources", float(np.max(np.abs(zero.states))), 0.0))
    return rows


SUITE_FUNCTIONS: Dict[str, Callable[[int], List[CheckRow]]] = {
    "bd": bd_suite,
    "mesh": mesh_suite,
    "impedance": impedance_suite,
    "material": material_suite,
    "evosolve": evosolve_suite,
}


def run_suite(name: str, seed: int = 0) -> List[CheckRow]:
    if name == "all":
        names: Iterable[str] = SUITES
    elif name in SUITE_FUNCTIONS:
        names = (name,)
    else:
        raise ConfigError([f"unknown suite '{name}', expected one of {', '.join(SUITES + ('all',))}"])
    rows: List[CheckRow] = []
    for suite in names:
        suite_rows = SUITE_FUNCTIONS[suite](seed)
        failed = [r.name for r in suite_rows if not r.passed]
        logger.info("verify %s: %d checks, %d failed", suite, len(suite_rows), len(failed))
        rows.extend(suite_rows)
    return rows


def rows_to_dict(rows: Sequence[CheckRow]) -> List[Dict[str, object]]:
    return [r._asdict() for r in rows]
