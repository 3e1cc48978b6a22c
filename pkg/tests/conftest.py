import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from src.tpe_evo.mesh import build_complex  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def cube2():
    return build_complex((2, 2, 2))


@pytest.fixture(scope="session")
def cube3():
    return build_complex((3, 3, 3))
