from __future__ import annotations

import csv
import json
import logging
from datetime import date
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np


class TpeError(Exception):
    """Base class for every error raised by the package."""


class DimensionError(TpeError):
    pass


class ShapeError(TpeError):
    pass


class PreconditionError(TpeError):
    pass


class NumericalError(TpeError):
    pass


class PivotError(NumericalError):
    def __init__(self, block: str, hypothesis: str = "", detail: str = "") -> None:
        self.block = block
        self.hypothesis = hypothesis
        message = f"pivot block '{block}' is not invertible"
        if hypothesis:
            message += f" (violated hypothesis: {hypothesis})"
        if detail:
            message += f": {detail}"
        super().__init__(message)


class FrequencyTooSmallError(PreconditionError):
    def __init__(self, nu: float, alpha_norm: float) -> None:
        self.nu = nu
        self.alpha_norm = alpha_norm
        super().__init__(
            f"Re z = {nu:.6g} does not exceed ||alpha_b|| = {alpha_norm:.6g}; "
            "the real-part bound 1 - ||alpha_b||/nu = min{1, 1 - ||alpha_b||/nu} is not positive"
        )


class SolverError(NumericalError):
    def __init__(self, step: int, detail: str) -> None:
        self.step = step
        super().__init__(f"step {step}: {detail}")


class ConfigError(TpeError):
    def __init__(self, diagnostics: Sequence[str]) -> None:
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics) or "invalid configuration")


def setup_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def ensure_dir(path: Path) -> None:
    path.mkdir(parents=True, exist_ok=True)


def to_jsonable(value: object) -> object:
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": float(np.real(value)), "im": float(np.imag(value))}
    if isinstance(value, (float, np.floating)):
        number = float(value)
        if np.isnan(number):
            return "nan"
        if np.isinf(number):
            return "inf" if number > 0 else "-inf"
        return number
    return value


def read_json(path: Path) -> Dict[str, object]:
    with path.open("r", encoding="utf-8") as handle:
        value = json.load(handle)
    return value if isinstance(value, dict) else {}


def write_json(path: Path, payload: Dict[str, object]) -> None:
    ensure_dir(path.parent)
    with path.open("w", encoding="utf-8") as handle:
        json.dump(to_jsonable(payload), handle, ensure_ascii=False, indent=2, sort_keys=True)
        handle.write("\n")


def write_csv(path: Path, fieldnames: List[str], rows: Iterable[Dict[str, object]]) -> None:
    ensure_dir(path.parent)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in fieldnames})


def read_csv_rows(path: Path) -> List[Dict[str, str]]:
    with path.open("r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        return [{k: (v or "").strip() for k, v in row.items() if k is not None} for row in reader]


def today_str() -> str:
    return date.today().isoformat()


def make_rng(seed: Optional[int]) -> np.random.Generator:
    return np.random.default_rng(seed)
