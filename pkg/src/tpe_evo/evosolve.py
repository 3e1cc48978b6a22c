"""Assembly and causal solution of the evolutionary system (d/dt M0 + M1 + A) U = F.

Two solvers share one :class:`EvoSystem`:

* :func:`simulate` steps in time with implicit Euler. The tau slots stay
  unknowns and satisfy the boundary relation tau + B0 (traces) + alpha_b w = 0,
  with the integrator w carrying the alpha_b d/dt^-1 memory.
* :func:`freq_solve` weights the samples with exp(-nu t), transforms, solves
  (z M0 + M1(z) + A) U = F at z = i xi + nu with K(z) on the tau slots and
  transforms back.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import trapezoid

from .bdspace import BDSpace, bd_map, bd_space
from .blockform import BlockOp, assemble_block, flatten
from .config import DEFAULT_PAD_FACTOR, DEFAULT_WORKERS, WRAP_ENERGY_TOL
from .impedance import BoundaryTriple, FrequencyPoint, boundary_blocks
from .linspace import HSpace, LinOp, adjoint, direct_sum
from .material import (
    SLOT,
    SLOTS,
    TAU_SLOTS,
    Certificate,
    MaterialData,
    SystemLayout,
    assemble_M0,
    assemble_M1,
    decoupled_unit,
)
from .mesh import OPERATORS, SpatialComplex
from .utils import PreconditionError, ShapeError, SolverError, make_rng

logger = logging.getLogger(__name__)

# BD slot -> (tau slot, field slot whose trace it takes)
TRACE_SLOTS = {"G": ("tau_T", "v"), "c": ("tau_H", "E"), "g": ("tau_q", "theta")}
B_INDEX = {"g": 0, "c": 1, "G": 2}
SOURCE_SLOTS = ("v", "T", "E", "H", "theta", "q")


@dataclass(frozen=True, eq=False)
class EvoSystem:
    layout: SystemLayout
    A: BlockOp
    M0: BlockOp
    boundary: BoundaryTriple
    material: MaterialData
    traces: Dict[str, LinOp]
    complex: Optional[SpatialComplex] = None
    bd: Dict[str, BDSpace] = field(default_factory=dict)

    def m1(self, z: FrequencyPoint) -> BlockOp:
        return assemble_M1(self.material, self.boundary, z, self.layout)

    @property
    def state_space(self) -> HSpace:
        return direct_sum(self.layout.spaces, "H")


def _as_trace(obj: Union[BDSpace, LinOp]) -> LinOp:
    return obj.trace if isinstance(obj, BDSpace) else obj


def assemble_A(
    complex_: SpatialComplex,
    traces: Mapping[str, Union[BDSpace, LinOp]],
    layout: SystemLayout,
) -> BlockOp:
    """Skew operator built from the column operators (-sgrad; iota*), (curl; iota*), (grad; iota*)."""
    ops = complex_.ops
    columns = {
        # field slot: (flux slot, interior operator, BD key)
        "v": ("T", -ops["sgrad"], "G"),
        "E": ("H", ops["curl"], "c"),
        "theta": ("q", ops["grad"], "g"),
    }
    entries: Dict[tuple, LinOp] = {}
    for src_slot, (flux_slot, interior, key) in columns.items():
        tau_slot = TRACE_SLOTS[key][0]
        trace = _as_trace(traces[key])
        tau_space = layout.space(tau_slot)
        if trace.shape != (tau_space.dim, layout.space(src_slot).dim):
            raise ShapeError(f"trace for BD({key}) has shape {trace.shape}, layout expects "
                             f"({tau_space.dim}, {layout.space(src_slot).dim})")
        trace = LinOp(layout.space(src_slot), tau_space, trace.mat)
        i, f, t = SLOT[src_slot], SLOT[flux_slot], SLOT[tau_slot]
        entries[(f, i)] = interior
        entries[(t, i)] = trace
        entries[(i, f)] = -adjoint(interior)
        entries[(i, t)] = -adjoint(trace)
    return assemble_block(layout.spaces, layout.spaces, entries, SLOTS)


def a_skew_defect(system: EvoSystem) -> float:
    """Largest entry of A + A* in the Gram-weighted state space."""
    flat = flatten(system.A)
    defect = (flat + adjoint(flat)).mat
    if sp.issparse(defect):
        return float(abs(defect).max()) if defect.nnz else 0.0
    return float(np.max(np.abs(defect), initial=0.0))


def build_system(
    complex_: SpatialComplex,
    material: MaterialData,
    triple: Optional[BoundaryTriple] = None,
    mode: str = "synthetic",
    seed: Optional[int] = None,
    q_scale: float = 1.0,
    b_scale: float = 1.0,
    a_scale: float = 0.5,
) -> EvoSystem:
    """BD spaces, boundary triple, layout, A and M0 for one complex."""
    bd = {name: bd_space(complex_, name) for name in OPERATORS}
    spaces = (bd["grad"], bd["curl"], bd["sgrad"])
    if triple is None:
        if mode == "mesh":
            triple = BoundaryTriple.mesh_derived(complex_, q_scale, b_scale, a_scale, spaces=spaces)
        elif mode == "synthetic":
            triple = BoundaryTriple.synthetic(
                [s.dim for s in spaces], make_rng(seed), q_scale=q_scale, b_scale=b_scale, a_scale=a_scale
            )
        elif mode == "trivial":
            triple = BoundaryTriple.synthetic(
                [s.dim for s in spaces], make_rng(seed), q_scale=0.0, b_scale=0.0, a_scale=0.0, s_scale=0.0
            )
        else:
            raise ShapeError(f"unknown boundary mode '{mode}', expected 'synthetic', 'mesh' or 'trivial'")
    if triple.dims != tuple(s.dim for s in spaces):
        raise ShapeError(f"boundary triple dims {triple.dims} do not match the BD spaces {[s.dim for s in spaces]}")
    layout = SystemLayout.from_parts(material, triple)
    traces = {
        "g": LinOp(material.gamma0.src, triple.g_space, bd["grad"].trace.mat),
        "c": LinOp(material.eps.src, triple.c_space, bd["curl"].trace.mat),
        "G": LinOp(material.rho.src, triple.G_space, bd["sgrad"].trace.mat),
    }
    system = EvoSystem(
        layout=layout,
        A=assemble_A(complex_, traces, layout),
        M0=assemble_M0(material, layout),
        boundary=triple,
        material=material,
        traces=traces,
        complex=complex_,
        bd=bd,
    )
    logger.info(
        "Built system cells=%s dims=%s total=%d",
        complex_.cells, layout.dims, layout.total_dim,
    )
    return system


def integrator_toy() -> EvoSystem:
    """Scalar system U' = F: one velocity unknown, M0 = 1, M1 = 0, A = 0, every other slot empty."""
    spaces = {"S3": HSpace.euclidean(1, "S3"), "SYM": HSpace.euclidean(0, "SYM"),
              "V": HSpace.euclidean(0, "V"), "S": HSpace.euclidean(0, "S")}
    material = decoupled_unit(spaces)
    triple = BoundaryTriple.synthetic((0, 0, 0), make_rng(0))
    layout = SystemLayout.from_parts(material, triple)
    traces = {
        "g": LinOp.zero(spaces["S"], triple.g_space),
        "c": LinOp.zero(spaces["V"], triple.c_space),
        "G": LinOp.zero(spaces["S3"], triple.G_space),
    }
    return EvoSystem(
        layout=layout,
        A=assemble_block(layout.spaces, layout.spaces, None, SLOTS),
        M0=assemble_M0(material, layout),
        boundary=triple,
        material=material,
        traces=traces,
    )


@dataclass(frozen=True, eq=False)
class SourceTerm:
    """Sampled right-hand side on t_n = n dt, n = 0..n_steps; tau rows carry no source."""

    dt: float
    n_steps: int
    samples: Dict[str, np.ndarray]
    onset: int = 0

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise PreconditionError(f"time step must be positive, got dt={self.dt}")
        if self.onset < 0:
            raise PreconditionError(f"onset must be non-negative, got {self.onset}")
        for slot, values in self.samples.items():
            if slot not in SOURCE_SLOTS:
                raise ShapeError(f"sources may not act on slot '{slot}'")
            if values.ndim != 2 or values.shape[0] != self.n_samples:
                raise ShapeError(f"source on '{slot}' needs shape ({self.n_samples}, dim), got {values.shape}")
            if np.any(values[: self.onset] != 0.0):
                raise PreconditionError(f"source on '{slot}' is nonzero before its declared onset {self.onset}")

    @property
    def n_samples(self) -> int:
        return self.n_steps + 1

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_samples)

    def dense(self, layout: SystemLayout) -> np.ndarray:
        out = np.zeros((self.n_samples, layout.total_dim))
        for slot, values in self.samples.items():
            sl = layout.slot_range(slot)
            if values.shape[1] != sl.stop - sl.start:
                raise ShapeError(f"source on '{slot}' has {values.shape[1]} components, slot has {sl.stop - sl.start}")
            out[:, sl] = values
        return out

    @classmethod
    def zero(cls, dt: float, n_steps: int) -> "SourceTerm":
        return cls(dt, n_steps, {}, 0)


def bump_profile(complex_: SpatialComplex, components: int) -> np.ndarray:
    """Smooth nodal field vanishing on the boundary, repeated for each component."""
    coords = complex_.node_coordinates()
    profile = np.ones(complex_.n_nodes)
    for k in complex_.active_axes:
        profile *= np.sin(math.pi * coords[k] / complex_.lengths[k]) ** 2
    return np.tile(profile, components)


def gaussian_pulse(
    layout: SystemLayout,
    slot: str,
    dt: float,
    n_steps: int,
    onset: int,
    width: float,
    amplitude: float = 1.0,
    profile: Optional[np.ndarray] = None,
) -> SourceTerm:
    """amplitude exp(-((t - t_c) / width)^2) profile, switched on at ``onset`` with t_c = t_onset + 3 width."""
    dim = layout.space(slot).dim
    shape = np.ones(dim) if profile is None else np.asarray(profile, dtype=float)
    times = dt * np.arange(n_steps + 1)
    center = onset * dt + 3.0 * width
    envelope = amplitude * np.exp(-(((times - center) / width) ** 2))
    envelope[:onset] = 0.0
    return SourceTerm(dt, n_steps, {slot: np.outer(envelope, shape)}, onset)


@dataclass(frozen=True, eq=False)
class TimeSeries:
    dt: float
    nu: float
    states: np.ndarray
    w: np.ndarray
    layout: SystemLayout
    onset: int = 0
    solver: str = "time"
    wrap_energy: float = 0.0
    wrap_warning: bool = False

    def __post_init__(self) -> None:
        if self.states.shape[1] != self.layout.total_dim or self.w.shape[0] != self.states.shape[0]:
            raise ShapeError("time series arrays are inconsistent with the layout")

    @property
    def n_samples(self) -> int:
        return int(self.states.shape[0])

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_samples)

    def slot(self, name: str) -> np.ndarray:
        return self.states[:, self.layout.slot_range(name)]

    def slot_norms(self, name: str) -> np.ndarray:
        space = self.layout.space(name)
        values = self.slot(name)
        return np.array([space.norm(row) for row in values]) if space.dim else np.zeros(self.n_samples)

    def state_norms(self) -> np.ndarray:
        total = sum(self.slot_norms(name) ** 2 for name in SLOTS)
        w_norms = np.linalg.norm(self.w, axis=1) if self.w.shape[1] else 0.0
        return np.sqrt(total + w_norms**2)


def _require_certified(nu: float, certificate: Optional[Certificate], override: bool) -> None:
    if override:
        logger.warning("Running without a certificate check (override acknowledged)")
        return
    if certificate is None or not certificate.accepted:
        raise PreconditionError("no accepted certificate; pass override_certificate=True to run anyway")
    if nu < certificate.nu_min * (1.0 - 1e-12):
        raise PreconditionError(f"nu={nu:.6g} is below the certified nu_min={certificate.nu_min:.6g}")


def _step_operator(system: EvoSystem, dt: float) -> BlockOp:
    layout, triple = system.layout, system.boundary
    spaces = list(layout.spaces) + [triple.G_space]
    names = tuple(SLOTS) + ("w",)
    w_index = len(SLOTS)
    b0, alpha_b = boundary_blocks(triple)
    tau_rows = {SLOT[s] for s in TAU_SLOTS}
    entries: Dict[tuple, LinOp] = {}
    for i in range(len(SLOTS)):
        if i in tau_rows:
            continue
        for j in range(len(SLOTS)):
            parts = []
            if system.M0.is_present(i, j):
                parts.append((1.0 / dt) * system.M0.block(i, j))
            if system.A.is_present(i, j):
                parts.append(system.A.block(i, j))
            if parts:
                acc = parts[0]
                for extra in parts[1:]:
                    acc = acc + extra
                entries[(i, j)] = acc
    for slot, op in (("E", system.material.sigma), ("q", system.material.kappa0_inv)):
        k = SLOT[slot]
        entries[(k, k)] = entries[(k, k)] + op if (k, k) in entries else op
    # tau + B0 (traces) + alpha_b w = 0, rows ordered like B0
    for row_key, (tau_slot, _) in TRACE_SLOTS.items():
        r = SLOT[tau_slot]
        entries[(r, r)] = LinOp.identity(layout.space(tau_slot))
        for col_key, (_, field_slot) in TRACE_SLOTS.items():
            coupling = b0.block(B_INDEX[row_key], B_INDEX[col_key]) @ system.traces[col_key]
            c = SLOT[field_slot]
            entries[(r, c)] = entries[(r, c)] + coupling if (r, c) in entries else coupling
    entries[(SLOT["tau_T"], w_index)] = alpha_b
    entries[(w_index, w_index)] = LinOp.identity(triple.G_space)
    entries[(w_index, SLOT["v"])] = -dt * system.traces["G"]
    return assemble_block(spaces, spaces, entries, names)


def simulate(
    system: EvoSystem,
    sources: SourceTerm,
    dt: Optional[float] = None,
    nu: float = 1.0,
    n_steps: Optional[int] = None,
    certificate: Optional[Certificate] = None,
    override_certificate: bool = False,
) -> TimeSeries:
    """Implicit Euler from a zero state; one sparse LU factorization serves every step."""
    dt = sources.dt if dt is None else dt
    n_steps = sources.n_steps if n_steps is None else n_steps
    if dt <= 0:
        raise PreconditionError(f"time step must be positive, got dt={dt}")
    if abs(dt - sources.dt) > 1e-15 * max(1.0, dt) or n_steps != sources.n_steps:
        raise ShapeError("sources are sampled on a different time grid")
    _require_certified(nu, certificate, override_certificate)

    layout = system.layout
    n_g = system.boundary.G_space.dim
    step = flatten(_step_operator(system, dt))
    try:
        lu = spla.splu(sp.csc_matrix(step.mat, dtype=float))
    except RuntimeError as exc:
        raise SolverError(0, f"step matrix is singular: {exc}") from exc
    m0 = flatten(system.M0).mat
    forcing = sources.dense(layout)
    n_u = layout.total_dim
    states = np.zeros((sources.n_samples, n_u))
    w = np.zeros((sources.n_samples, n_g))
    rhs = np.zeros(n_u + n_g)
    for n in range(1, sources.n_samples):
        rhs[:n_u] = forcing[n] + (m0 @ states[n - 1]) / dt
        rhs[n_u:] = w[n - 1]
        solution = lu.solve(rhs)
        if not np.all(np.isfinite(solution)):
            raise SolverError(n, "non-finite state")
        states[n] = solution[:n_u]
        w[n] = solution[n_u:]
    logger.info("simulate: %d steps dt=%.3g, final norm %.3e", n_steps, dt, np.linalg.norm(states[-1]))
    return TimeSeries(dt, nu, states, w, layout, onset=sources.onset, solver="time")


def _frequency_matrix(system: EvoSystem, m0: sp.spmatrix, a: sp.spmatrix, z: FrequencyPoint) -> sp.csc_matrix:
    m1 = flatten(system.m1(z)).mat
    return sp.csc_matrix(z.z * m0 + m1 + a, dtype=complex)


def freq_solve(
    system: EvoSystem,
    sources: SourceTerm,
    nu: float,
    n_steps: Optional[int] = None,
    pad_factor: int = DEFAULT_PAD_FACTOR,
    workers: int = DEFAULT_WORKERS,
    certificate: Optional[Certificate] = None,
    override_certificate: bool = False,
) -> TimeSeries:
    """Weighted discrete Fourier-Laplace solve on the time grid of ``sources``."""
    if pad_factor < 4:
        raise PreconditionError(f"zero-padding factor must be at least 4, got {pad_factor}")
    n_steps = sources.n_steps if n_steps is None else n_steps
    if n_steps != sources.n_steps:
        raise ShapeError("sources are sampled on a different time grid")
    _require_certified(nu, certificate, override_certificate)

    layout = system.layout
    dt = sources.dt
    n = sources.n_samples
    n_pad = pad_factor * n
    weight = np.exp(-nu * sources.times)
    padded = np.zeros((n_pad, layout.total_dim))
    padded[:n] = sources.dense(layout) * weight[:, None]
    f_hat = np.fft.rfft(padded, axis=0)
    xi = 2.0 * math.pi * np.fft.rfftfreq(n_pad, dt)
    points = [FrequencyPoint(complex(nu, x)) for x in xi]

    m0 = flatten(system.M0).mat
    a = flatten(system.A).mat
    u_hat = np.zeros_like(f_hat)

    def solve_one(k: int) -> np.ndarray:
        if not np.any(f_hat[k]):
            return np.zeros(layout.total_dim, dtype=complex)
        try:
            lu = spla.splu(_frequency_matrix(system, m0, a, points[k]))
        except RuntimeError as exc:
            raise SolverError(k, f"singular system at z={points[k].z:.6g}: {exc}") from exc
        return lu.solve(f_hat[k])

    workers = max(1, workers)
    if workers == 1:
        for k in range(len(points)):
            u_hat[k] = solve_one(k)
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            future_map = {executor.submit(solve_one, k): k for k in range(len(points))}
            for future in as_completed(future_map):
                u_hat[future_map[future]] = future.result()

    g_trace = system.traces["G"].mat
    v_range = layout.slot_range("v")
    w_hat = np.stack([(g_trace @ u_hat[k, v_range]) / points[k].z for k in range(len(points))]) \
        if system.boundary.G_space.dim else np.zeros((len(points), 0), dtype=complex)

    weighted = np.fft.irfft(u_hat, n=n_pad, axis=0)
    w_weighted = np.fft.irfft(w_hat, n=n_pad, axis=0) if w_hat.shape[1] else np.zeros((n_pad, 0))
    total_energy = float(np.sum(weighted**2))
    trailing = float(np.sum(weighted[n_pad - n:] ** 2))
    wrap_energy = trailing / total_energy if total_energy > 0 else 0.0
    wrap_warning = wrap_energy > WRAP_ENERGY_TOL
    if wrap_warning:
        logger.warning("freq_solve: trailing energy fraction %.3e exceeds %.1e; wrap-around likely", wrap_energy, WRAP_ENERGY_TOL)
    unweight = np.exp(nu * sources.times)[:, None]
    states = weighted[:n] * unweight
    w = w_weighted[:n] * unweight
    logger.info("freq_solve: %d frequencies, pad %d, wrap fraction %.3e", len(points), pad_factor, wrap_energy)
    return TimeSeries(
        dt, nu, states, w, layout, onset=sources.onset, solver="freq",
        wrap_energy=wrap_energy, wrap_warning=wrap_warning,
    )


def check_causality(series: TimeSeries, onset: Optional[int] = None) -> float:
    """Largest state norm before the source onset."""
    onset = series.onset if onset is None else onset
    if onset <= 0:
        return 0.0
    value = float(np.max(series.state_norms()[:onset]))
    logger.info("causality (%s): max pre-onset norm %.3e", series.solver, value)
    return value


def weighted_norm(values: np.ndarray, space: HSpace, dt: float, nu: float) -> float:
    """Trapezoidal L2_nu norm of sampled values in ``space``."""
    sq = np.array([space.norm(row) ** 2 for row in values]) if space.dim else np.zeros(len(values))
    weights = np.exp(-2.0 * nu * dt * np.arange(len(values)))
    return math.sqrt(float(trapezoid(sq * weights, dx=dt)))


def check_norm_bound(series: TimeSeries, sources: SourceTerm, c: float) -> float:
    """Slack ||F||_nu / (c ||U||_nu) - 1 of the solution bound ||U|| <= ||F|| / c."""
    if c <= 0:
        raise PreconditionError(f"norm bound needs c > 0, got {c}")
    space = direct_sum(series.layout.spaces)
    f_norm = weighted_norm(sources.dense(series.layout), space, series.dt, series.nu)
    u_norm = weighted_norm(series.states, space, series.dt, series.nu)
    if f_norm == 0 or u_norm == 0:
        return math.inf
    return f_norm / (c * u_norm) - 1.0


def _constraint_parts(series: TimeSeries, system: EvoSystem) -> Dict[str, np.ndarray]:
    bd = system.bd
    maps = {
        "tau_T": (bd_map(bd["sdiv"], bd["sgrad"], system.complex).op, bd["sdiv"], "T", 1.0),
        "tau_H": (bd_map(bd["curl"], bd["curl"], system.complex).op, bd["curl"], "H", 1.0),
        "tau_q": (bd_map(bd["div"], bd["grad"], system.complex).op, bd["div"], "q", -1.0),
    }
    out = {}
    for tau, (op, src_bd, field_slot, sign) in maps.items():
        traces = series.slot(field_slot) @ src_bd.trace.dense().T
        out[tau] = sign * (traces @ op.dense().T)
    return out


def constraint_residual(series: TimeSeries, system: EvoSystem) -> Dict[str, np.ndarray]:
    """Per-step norms of tau_T - Div_BD T, tau_H - curl_BD H and tau_q + div_BD q; diagnostic only."""
    if system.complex is None or not system.bd:
        return {tau: np.zeros(series.n_samples) for tau in TAU_SLOTS}
    targets = _constraint_parts(series, system)
    residual = {
        tau: np.linalg.norm(series.slot(tau) - targets[tau], axis=1) for tau in TAU_SLOTS
    }
    logger.info(
        "constraint residual max: %s",
        ", ".join(f"{tau}={float(np.max(r, initial=0.0)):.3e}" for tau, r in residual.items()),
    )
    return residual


def project_constraints(series: TimeSeries, system: EvoSystem) -> TimeSeries:
    """Replace the tau slots by their trace forms."""
    if system.complex is None or not system.bd:
        return series
    states = np.array(series.states, copy=True)
    for tau, values in _constraint_parts(series, system).items():
        states[:, series.layout.slot_range(tau)] = values
    return replace(series, states=states)


def system_energy(series: TimeSeries, system: EvoSystem) -> np.ndarray:
    """<U, M0 U> + <w, Re alpha_b w> per step."""
    m0 = flatten(system.M0)
    space = m0.src
    alpha = system.boundary.alpha_b
    re_alpha = 0.5 * (alpha + adjoint(alpha))
    energy = np.empty(series.n_samples)
    for n in range(series.n_samples):
        u = series.states[n]
        value = space.inner(u, m0.apply(u)).real
        if series.w.shape[1]:
            value += system.boundary.G_space.inner(series.w[n], re_alpha.apply(series.w[n])).real
        energy[n] = value
    return energy


def l2_difference(a: TimeSeries, b: TimeSeries) -> float:
    """Discrete L2(0, T) distance between two trajectories on the same grid."""
    if a.states.shape != b.states.shape:
        raise ShapeError("trajectories live on different grids")
    space = direct_sum(a.layout.spaces)
    sq = np.array([space.norm(row) ** 2 for row in a.states - b.states])
    return math.sqrt(float(trapezoid(sq, dx=a.dt)))
