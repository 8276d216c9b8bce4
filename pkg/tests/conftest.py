import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from eselection.demo import synthetic_triples  # noqa: E402
from eselection.scores import ForecastTriple  # noqa: E402

# the first call into a compiled kernel can take seconds
settings.register_profile("default", deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def demo_triples():
    return synthetic_triples(n=1200, horizon=8, seed=3, switch=0.55)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_triples(mae_pairs, horizon=1):
    """Triples whose per-step MAEs are exactly the given (mae_p, mae_q) pairs."""
    out = []
    for t, (a, b) in enumerate(mae_pairs, start=1):
        y = np.zeros(horizon)
        out.append(ForecastTriple(t, y + a, y + b, y))
    return out
