import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_dissipative_steps(rng, dim, Nt, margin=0.5):
    """Random step matrices with a certified positive gap:
    min lambda_min(Herm P) - max ||Q|| >= margin (roughly)."""
    steps = []
    for _ in range(Nt):
        G = rng.standard_normal((dim, dim))
        P = (1.3 + 0.2 * rng.random()) * np.eye(dim) + 0.3 * (G + G.T) / (2 * np.sqrt(dim)) \
            + 0.3 * (G - G.T) / (2 * np.sqrt(dim))
        Q = 0.35 * rng.standard_normal((dim, dim)) / np.sqrt(dim)
        b = rng.standard_normal(dim)
        steps.append((P, Q, b))
    return steps
