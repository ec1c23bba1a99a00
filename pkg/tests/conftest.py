import numpy as np
import pytest

from mvbern.model import JointCounts


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def anticipated_counts_pair():
    """Anticipated joint-response frequencies for the weight example.

    Pattern order 11, 10, 01, 00 per arm; n = 1000 each; margins
    (0.62, 0.54) vs (0.38, 0.46) with correlation about -0.3.
    """
    return JointCounts([262, 358, 278, 102]), JointCounts([102, 278, 358, 262])


def feasible_margin_pairs(n, seed):
    """(theta1, theta2, rho) triples strictly inside the feasibility window."""
    gen = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        t1, t2 = gen.uniform(0.05, 0.95, size=2)
        scale = np.sqrt(t1 * (1 - t1) * t2 * (1 - t2))
        lo = (max(0.0, t1 + t2 - 1.0) - t1 * t2) / scale
        hi = (min(t1, t2) - t1 * t2) / scale
        rho = gen.uniform(lo + 0.02 * (hi - lo), hi - 0.02 * (hi - lo))
        out.append((t1, t2, rho))
    return out
