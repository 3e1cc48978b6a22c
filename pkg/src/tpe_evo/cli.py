from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import exporter, verify
from .config import DEFAULT_LOG_LEVEL, DEFAULT_PAD_FACTOR, DEFAULT_WORKERS, KCHECK_JSON, KCHECK_TOL, OUTPUT_DIR, VERIFY_JSON
from .evosolve import (
    SOURCE_SLOTS,
    EvoSystem,
    SourceTerm,
    build_system,
    bump_profile,
    check_causality,
    check_norm_bound,
    constraint_residual,
    freq_solve,
    gaussian_pulse,
    l2_difference,
    simulate,
)
from .impedance import BoundaryTriple, FrequencyPoint, k_inverse_residual
from .material import Certificate, CertifySearch, MaterialData, certify, decoupled_unit, eddy_current_eps, material_from_coefficients
from .mesh import build_complex
from .utils import ConfigError, PreconditionError, TpeError, make_rng, setup_logging, today_str

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_REJECTED = 2

MATERIAL_PRESETS = ("decoupled_unit", "eddy_current")
BOUNDARY_MODES = ("synthetic", "mesh", "trivial")
SOURCE_KINDS = ("zero", "gaussian_pulse", "file")


@dataclass(frozen=True)
class GridConfig:
    cells: Tuple[int, int, int]
    lengths: Tuple[float, float, float] = (1.0, 1.0, 1.0)


@dataclass(frozen=True)
class BoundaryConfig:
    mode: str = "synthetic"
    seed: int = 0
    q_scale: float = 1.0
    b_scale: float = 1.0
    a_scale: float = 0.5


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    n_steps: int
    nu: Optional[float] = None  # None: nu_min of the certificate
    solver: str = "time"
    pad_factor: int = DEFAULT_PAD_FACTOR
    workers: int = DEFAULT_WORKERS


@dataclass(frozen=True)
class SourceConfig:
    kind: str = "zero"
    slot: str = "v"
    onset: int = 0
    width: float = 0.05
    amplitude: float = 1.0
    path: Optional[Path] = None


@dataclass(frozen=True)
class RunConfig:
    grid: GridConfig
    material: Dict[str, object]
    boundary: BoundaryConfig
    solver: SolverConfig
    sources: SourceConfig
    search: CertifySearch = field(default_factory=CertifySearch)
    output_dir: Optional[Path] = None
    formats: Tuple[str, ...] = ("csv", "raw")


def _section(raw: Dict[str, object], key: str, errors: List[str], required: bool = False) -> Dict[str, object]:
    value = raw.get(key)
    if value is None:
        if required:
            errors.append(f"missing section '{key}'")
        return {}
    if not isinstance(value, dict):
        errors.append(f"section '{key}' must be an object")
        return {}
    return value


def _number(section: Dict[str, object], key: str, default, kind, errors: List[str], where: str):
    value = section.get(key, default)
    try:
        return kind(value)
    except (TypeError, ValueError):
        errors.append(f"{where}.{key}: expected {kind.__name__}, got {value!r}")
        return default


def parse_run_config(raw: Dict[str, object], base_dir: Path = Path(".")) -> RunConfig:
    errors: List[str] = []

    grid_raw = _section(raw, "grid", errors, required=True)
    cells = grid_raw.get("cells", [])
    lengths = grid_raw.get("lengths", [1.0, 1.0, 1.0])
    if not (isinstance(cells, list) and len(cells) == 3 and all(isinstance(c, int) for c in cells)):
        errors.append(f"grid.cells: expected three integers, got {cells!r}")
        cells = [2, 2, 2]
    elif any(c < 0 or c == 1 for c in cells) or not any(c > 0 for c in cells):
        errors.append(f"grid.cells: every active axis needs at least 2 cells, got {cells}")
    if not (isinstance(lengths, list) and len(lengths) == 3):
        errors.append(f"grid.lengths: expected three numbers, got {lengths!r}")
        lengths = [1.0, 1.0, 1.0]

    material = _section(raw, "material", errors)
    preset = material.get("preset")
    if preset is not None and preset not in MATERIAL_PRESETS:
        errors.append(f"material.preset: unknown preset {preset!r}, expected one of {', '.join(MATERIAL_PRESETS)}")

    boundary_raw = _section(raw, "boundary", errors)
    boundary = BoundaryConfig(
        mode=str(boundary_raw.get("mode", "synthetic")),
        seed=_number(boundary_raw, "seed", 0, int, errors, "boundary"),
        q_scale=_number(boundary_raw, "q_scale", 1.0, float, errors, "boundary"),
        b_scale=_number(boundary_raw, "b_scale", 1.0, float, errors, "boundary"),
        a_scale=_number(boundary_raw, "a_scale", 0.5, float, errors, "boundary"),
    )
    if boundary.mode not in BOUNDARY_MODES:
        errors.append(f"boundary.mode: expected one of {', '.join(BOUNDARY_MODES)}, got {boundary.mode!r}")

    solver_raw = _section(raw, "solver", errors)
    nu_raw = solver_raw.get("nu", "auto")
    nu: Optional[float] = None
    if nu_raw != "auto":
        nu = _number(solver_raw, "nu", None, float, errors, "solver")
    solver = SolverConfig(
        dt=_number(solver_raw, "dt", 0.01, float, errors, "solver"),
        n_steps=_number(solver_raw, "n_steps", 100, int, errors, "solver"),
        nu=nu,
        solver=str(solver_raw.get("solver", "time")),
        pad_factor=_number(solver_raw, "pad_factor", DEFAULT_PAD_FACTOR, int, errors, "solver"),
        workers=_number(solver_raw, "workers", DEFAULT_WORKERS, int, errors, "solver"),
    )
    if solver.dt <= 0:
        errors.append(f"solver.dt: must be positive, got {solver.dt}")
    if solver.n_steps < 1:
        errors.append(f"solver.n_steps: must be at least 1, got {solver.n_steps}")
    if solver.solver not in ("time", "freq"):
        errors.append(f"solver.solver: expected 'time' or 'freq', got {solver.solver!r}")
    if solver.pad_factor < 4:
        errors.append(f"solver.pad_factor: must be at least 4, got {solver.pad_factor}")

    sources_raw = _section(raw, "sources", errors)
    path = sources_raw.get("path")
    sources = SourceConfig(
        kind=str(sources_raw.get("kind", "zero")),
        slot=str(sources_raw.get("slot", "v")),
        onset=_number(sources_raw, "onset", 0, int, errors, "sources"),
        width=_number(sources_raw, "width", 0.05, float, errors, "sources"),
        amplitude=_number(sources_raw, "amplitude", 1.0, float, errors, "sources"),
        path=(base_dir / str(path)) if path else None,
    )
    if sources.kind not in SOURCE_KINDS:
        errors.append(f"sources.kind: expected one of {', '.join(SOURCE_KINDS)}, got {sources.kind!r}")
    if sources.slot not in SOURCE_SLOTS:
        errors.append(f"sources.slot: unknown slot {sources.slot!r}, expected one of {', '.join(SOURCE_SLOTS)}")
    if sources.onset < 0:
        errors.append(f"sources.onset: must be non-negative, got {sources.onset}")
    if sources.kind == "file" and sources.path is None:
        errors.append("sources.path: required for file sources")

    search_raw = _section(raw, "search", errors)
    fixed = search_raw.get("fixed_nu")
    search = CertifySearch()
    try:
        search = CertifySearch(
            nu0=_number(search_raw, "nu0", 0.0625, float, errors, "search"),
            max_doublings=_number(search_raw, "max_doublings", 40, int, errors, "search"),
            fixed_nu=float(fixed) if fixed is not None else None,
        )
    except (TpeError, TypeError, ValueError) as exc:
        errors.append(f"search: {exc}")

    outputs = _section(raw, "outputs", errors)
    directory = outputs.get("directory")
    formats = outputs.get("formats", ["csv", "raw"])
    if not isinstance(formats, list) or any(f not in ("csv", "raw") for f in formats):
        errors.append(f"outputs.formats: expected a subset of ['csv', 'raw'], got {formats!r}")
        formats = ["csv", "raw"]

    if errors:
        raise ConfigError(errors)
    return RunConfig(
        grid=GridConfig(tuple(int(c) for c in cells), tuple(float(v) for v in lengths)),  # type: ignore[arg-type]
        material=dict(material),
        boundary=boundary,
        solver=solver,
        sources=sources,
        search=search,
        output_dir=(base_dir / str(directory)) if directory else None,
        formats=tuple(formats),
    )


def with_seed(config: RunConfig, seed: Optional[int]) -> RunConfig:
    """Override the synthetic boundary-triple seed from the command line."""
    if seed is None:
        return config
    return replace(config, boundary=replace(config.boundary, seed=seed))


def load_run_config(path: Path) -> RunConfig:
    try:
        with path.open("r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except FileNotFoundError:
        raise ConfigError([f"config file not found: {path}"])
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}"])
    if not isinstance(raw, dict):
        raise ConfigError([f"{path}: top level must be an object"])
    return parse_run_config(raw, path.parent)


def build_material(config: RunConfig, spaces) -> MaterialData:
    coeffs = {k: v for k, v in config.material.items() if k != "preset"}
    preset = config.material.get("preset")
    try:
        if preset == "decoupled_unit":
            d = decoupled_unit(spaces, sigma=float(coeffs.get("sigma", 0.0)))
        else:
            d = material_from_coefficients(spaces, coeffs)
        if preset == "eddy_current":
            d = d.with_(eps=eddy_current_eps(d))
    except (TpeError, TypeError, ValueError) as exc:
        raise ConfigError([f"material: {exc}"]) from exc
    return d


def build_from_config(config: RunConfig) -> EvoSystem:
    try:
        cx = build_complex(config.grid.cells, config.grid.lengths)
    except TpeError as exc:
        raise ConfigError([f"grid: {exc}"]) from exc
    material = build_material(config, cx.spaces)
    b = config.boundary
    return build_system(
        cx, material, mode=b.mode, seed=b.seed, q_scale=b.q_scale, b_scale=b.b_scale, a_scale=b.a_scale
    )


def build_sources(config: RunConfig, system: EvoSystem) -> SourceTerm:
    s, solver = config.sources, config.solver
    if s.kind == "zero":
        return SourceTerm.zero(solver.dt, solver.n_steps)
    if s.kind == "gaussian_pulse":
        profile = None
        if system.complex is not None:
            components = system.layout.space(s.slot).dim // system.complex.n_nodes
            profile = bump_profile(system.complex, components)
        return gaussian_pulse(
            system.layout, s.slot, solver.dt, solver.n_steps, s.onset, s.width, s.amplitude, profile
        )
    try:
        with np.load(s.path) as data:
            samples = {name: np.asarray(data[name], dtype=float) for name in data.files}
        return SourceTerm(solver.dt, solver.n_steps, samples, s.onset)
    except (OSError, TpeError, ValueError) as exc:
        raise ConfigError([f"sources.path: {exc}"]) from exc


def _out_dir(args: argparse.Namespace, config: Optional[RunConfig] = None) -> Path:
    if args.out:
        return Path(args.out)
    if config is not None and config.output_dir is not None:
        return config.output_dir
    return OUTPUT_DIR


def run_certify(config: RunConfig) -> Tuple[EvoSystem, Certificate]:
    system = build_from_config(config)
    certificate = certify(system.material, system.boundary, config.search)
    return system, certificate


def cmd_certify(args: argparse.Namespace) -> int:
    config = with_seed(load_run_config(Path(args.config)), args.seed)
    _, certificate = run_certify(config)
    out = _out_dir(args, config)
    path = exporter.write_certificate(certificate, out)
    if not certificate.accepted:
        worst = min(certificate.conditions.items(), key=lambda kv: kv[1])
        print(
            f"Certify finished: accepted=False, violated={', '.join(certificate.violated)}, "
            f"worst={worst[0]} ({worst[1]:.3e}) -> {path}"
        )
        return EXIT_REJECTED
    print(f"Certify finished: accepted=True, nu_min={certificate.nu_min:.6g}, c={certificate.c:.6g} -> {path}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    config = with_seed(load_run_config(Path(args.config)), args.seed)
    system = build_from_config(config)
    sources = build_sources(config, system)
    certificate: Optional[Certificate] = None
    if not args.override_certificate or config.solver.nu is None:
        certificate = certify(system.material, system.boundary, config.search)
        if not certificate.accepted and not args.override_certificate:
            print(f"Simulate refused: certificate rejected ({', '.join(certificate.violated)})")
            return EXIT_REJECTED
    nu = config.solver.nu
    if nu is None:
        if certificate is None or not certificate.accepted:
            print("Simulate refused: nu is 'auto' but no certificate was accepted")
            return EXIT_REJECTED
        nu = certificate.nu_min
    solver = args.solver or config.solver.solver

    def run(kind: str):
        if kind == "freq":
            return freq_solve(
                system, sources, nu, pad_factor=config.solver.pad_factor, workers=config.solver.workers,
                certificate=certificate, override_certificate=args.override_certificate,
            )
        return simulate(system, sources, nu=nu, certificate=certificate, override_certificate=args.override_certificate)

    try:
        series = run(solver)
        other = run("freq" if solver == "time" else "time") if args.compare else None
    except PreconditionError as exc:
        print(f"Simulate refused: {exc}")
        return EXIT_REJECTED

    out = _out_dir(args, config)
    exporter.write_series(series, out, config.formats)
    causality = check_causality(series)
    residual = constraint_residual(series, system)
    summary = [f"solver={solver}", f"nu={nu:.6g}", f"max_pre_onset={causality:.3e}"]
    if certificate is not None and certificate.accepted and certificate.c > 0:
        summary.append(f"norm_slack={check_norm_bound(series, sources, certificate.c):.4g}")
    summary.append("constraint=" + ",".join(f"{k}:{float(np.max(v, initial=0.0)):.2e}" for k, v in residual.items()))
    if other is not None:
        summary.append(f"l2_difference={l2_difference(series, other):.4e}")
    if series.wrap_warning:
        summary.append(f"wrap_warning={series.wrap_energy:.2e}")
    print("Simulate finished: " + ", ".join(summary))
    return EXIT_OK


def cmd_kcheck(args: argparse.Namespace) -> int:
    dims = tuple(args.dims)
    if len(dims) != 3 or any(d < 1 for d in dims) or args.trials < 1:
        raise ConfigError([f"kcheck needs three dims >= 1 and trials >= 1, got dims={list(dims)} trials={args.trials}"])
    rng = make_rng(args.seed)
    residuals: List[float] = []
    for _ in range(args.trials):
        triple = BoundaryTriple.synthetic(dims, rng)
        nu = args.nu if args.nu is not None else 2.0 * triple.alpha_norm + 1.0
        try:
            residuals.append(k_inverse_residual(triple, FrequencyPoint(complex(nu, 1.0))))
        except PreconditionError as exc:
            print(f"Kcheck refused: {exc}")
            return EXIT_REJECTED
    worst = max(residuals)
    passed = worst <= KCHECK_TOL
    path = exporter.write_report(
        KCHECK_JSON,
        {
            "dims": list(dims),
            "trials": args.trials,
            "seed": args.seed,
            "max_residual": worst,
            "residuals": residuals,
            "tolerance": KCHECK_TOL,
            "passed": passed,
            "generated": today_str(),
        },
        _out_dir(args),
    )
    print(f"Kcheck finished: trials={args.trials}, max_residual={worst:.3e}, passed={passed} -> {path}")
    return EXIT_OK if passed else EXIT_REJECTED


def cmd_verify(args: argparse.Namespace) -> int:
    rows = verify.run_suite(args.suite, seed=args.seed)
    failed = [r for r in rows if not r.passed]
    path = exporter.write_report(
        VERIFY_JSON,
        {"suite": args.suite, "checks": verify.rows_to_dict(rows), "failed": len(failed)},
        _out_dir(args),
    )
    for r in failed:
        print(f"  FAILED {r.name}: residual={r.residual:.3e} tolerance={r.tolerance:.1e}")
    print(f"Verify finished: suite={args.suite}, checks={len(rows)}, failed={len(failed)} -> {path}")
    return EXIT_REJECTED if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tpe_evo",
        description="Thermo-piezo-electromagnetic evolutionary system: certify, simulate, check",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, needs_config: bool) -> None:
        p.add_argument("--config", required=needs_config, help="JSON run configuration")
        p.add_argument("--out", default=None, help="output directory")
        if needs_config:
            p.add_argument("--seed", type=int, default=None, help="boundary-triple seed, overrides boundary.seed")
        else:
            p.add_argument("--seed", type=int, default=0)

    pc = sub.add_parser("certify", help="Check the well-posedness conditions and write the certificate")
    common(pc, True)

    ps = sub.add_parser("simulate", help="Solve the evolution system and write the time series")
    common(ps, True)
    ps.add_argument("--solver", choices=("time", "freq"), default=None)
    ps.add_argument("--override-certificate", action="store_true")
    ps.add_argument("--compare", action="store_true", help="also run the other solver and report the L2 difference")

    pk = sub.add_parser("kcheck", help="Compare the closed-form K(z) with B(z) on random boundary triples")
    common(pk, False)
    pk.add_argument("--dims", type=int, nargs=3, default=[3, 4, 5])
    pk.add_argument("--trials", type=int, default=100)
    pk.add_argument("--nu", type=float, default=None)

    pv = sub.add_parser("verify", help="Run invariant suites")
    common(pv, False)
    pv.add_argument("suite", help="bd, mesh, impedance, material, evosolve or all")

    return parser


COMMANDS = {"certify": cmd_certify, "simulate": cmd_simulate, "kcheck": cmd_kcheck, "verify": cmd_verify}


def main(argv: Optional[Sequence[str]] = None) -> int:
    setup_logging(DEFAULT_LOG_LEVEL)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        for line in exc.diagnostics:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except TpeError as exc:
        logger.error("%s failed: %s", args.command, exc)
        return EXIT_REJECTED


if __name__ == "__main__":
    raise SystemExit(main())
