import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from llnslab.diffusivity import f2_monte_carlo


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(94823)


@pytest.fixture(scope="session")
def f2_mc_acceptance():
    """The criterion-grade Monte Carlo run, shared by several tests."""
    return f2_monte_carlo(samples=10_000_000, seed=20240, norm="euclid")


@pytest.fixture(scope="session")
def f2_mc_quick():
    return f2_monte_carlo(samples=1_500_000, seed=77, norm="euclid")
