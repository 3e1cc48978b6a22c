from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from .config import CERTIFICATE_JSON, SERIES_CSV, SERIES_RAW, SERIES_SIDECAR
from .evosolve import TimeSeries
from .material import SLOTS, Certificate
from .utils import ShapeError, ensure_dir, read_json, write_csv, write_json

SERIES_FIELDS = ["step", "t", "slot", "norm"]
RAW_DTYPE = "<f8"


def series_rows(series: TimeSeries) -> List[Dict[str, object]]:
    """One row per (step, slot) with the Gram norm of that slot; the integrator w comes last."""
    times = series.times
    norms = {name: series.slot_norms(name) for name in SLOTS}
    norms["w"] = np.linalg.norm(series.w, axis=1) if series.w.shape[1] else np.zeros(series.n_samples)
    rows: List[Dict[str, object]] = []
    for n in range(series.n_samples):
        for name, values in norms.items():
            rows.append({"step": n, "t": repr(float(times[n])), "slot": name, "norm": repr(float(values[n]))})
    return rows


def _raw_block(series: TimeSeries) -> np.ndarray:
    return np.ascontiguousarray(np.hstack([series.states, series.w]), dtype=RAW_DTYPE)


def write_series(series: TimeSeries, out_dir: Path, formats: Sequence[str] = ("csv", "raw")) -> List[Path]:
    ensure_dir(out_dir)
    written: List[Path] = []
    block = _raw_block(series)
    if "csv" in formats:
        csv_path = out_dir / SERIES_CSV
        write_csv(csv_path, SERIES_FIELDS, series_rows(series))
        written.append(csv_path)
    if "raw" in formats:
        written.extend(_write_raw(series, block, out_dir))
    print(f"Series written: steps={series.n_samples - 1}, columns={block.shape[1]} -> {out_dir}")
    return written


def _write_raw(series: TimeSeries, block: np.ndarray, out_dir: Path) -> List[Path]:
    raw_path = out_dir / SERIES_RAW
    sidecar_path = out_dir / SERIES_SIDECAR
    block.tofile(raw_path)
    write_json(
        sidecar_path,
        {
            "file": SERIES_RAW,
            "dtype": RAW_DTYPE,
            "order": "C",
            "shape": list(block.shape),
            "dt": series.dt,
            "nu": series.nu,
            "onset": series.onset,
            "solver": series.solver,
            "layout": series.layout.to_dict() + [
                {"slot": "w", "dim": int(series.w.shape[1]), "offset": series.layout.total_dim}
            ],
            "wrap_energy": series.wrap_energy,
            "wrap_warning": series.wrap_warning,
        },
    )
    return [raw_path, sidecar_path]


def read_series_raw(sidecar_path: Path) -> np.ndarray:
    """Load the raw container described by a sidecar written by :func:`write_series`."""
    meta = read_json(sidecar_path)
    raw_path = sidecar_path.parent / str(meta.get("file", SERIES_RAW))
    shape = tuple(int(v) for v in meta.get("shape", []))
    values = np.fromfile(raw_path, dtype=str(meta.get("dtype", RAW_DTYPE)))
    if len(shape) != 2 or values.size != shape[0] * shape[1]:
        raise ShapeError(f"{raw_path} holds {values.size} values, sidecar declares shape {shape}")
    return values.reshape(shape)


def write_certificate(certificate: Certificate, out_dir: Path) -> Path:
    path = out_dir / CERTIFICATE_JSON
    write_json(path, certificate.to_dict())
    return path


def write_report(name: str, payload: Dict[str, object], out_dir: Path) -> Path:
    path = out_dir / name
    write_json(path, payload)
    return path
