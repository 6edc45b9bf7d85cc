import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from curvediff.checks import random_regular_curve, random_tangent  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture
def rand_curve():
    return random_regular_curve


@pytest.fixture
def rand_tangent():
    return random_tangent
