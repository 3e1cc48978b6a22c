from __future__ import annotations

import os
from pathlib import Path

PROJECT_ROOT = Path(__file__).resolve().parents[2]

CONFIG_DIR = PROJECT_ROOT / "configs"
DATA_DIR = PROJECT_ROOT / "data"
OUTPUT_DIR = DATA_DIR / "output"

CERTIFICATE_JSON = "certificate.json"
SERIES_CSV = "series.csv"
SERIES_RAW = "series.f64"
SERIES_SIDECAR = "series.json"
KCHECK_JSON = "kcheck.json"
VERIFY_JSON = "verify.json"

DEFAULT_LOG_LEVEL = os.getenv("TPE_LOG_LEVEL", "INFO").upper()
DEFAULT_WORKERS = int(os.getenv("TPE_WORKERS", "4"))
DEFAULT_PAD_FACTOR = int(os.getenv("TPE_PAD_FACTOR", "4"))

# positivity decisions: values in (-EIG_TOL, EIG_TOL) are indefinite-to-tolerance
EIG_TOL = float(os.getenv("TPE_EIG_TOL", "1e-10"))
PIVOT_TOL = float(os.getenv("TPE_PIVOT_TOL", "1e-12"))

# |Im z| samples, in units of (1 + ||alpha_b||)
Z_IMAG_MULTIPLIERS = (0.0, 1.0, 10.0, 100.0, 1000.0)

KCHECK_TOL = 1e-9
WRAP_ENERGY_TOL = 1e-8
