import os
import sys

import numpy as np
import pytest

# the SymGL modules are flat files at the repository root
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from linalg_utils import HemispherePartition

def random_spd(rng, p, n = None):
    """Sample second-moment matrix of n draws from a random Gaussian."""
    n = n if n is not None else 5 * p
    A = rng.standard_normal((p, p))
    Sigma = A @ A.T / p + np.eye(p)
    Y = rng.multivariate_normal(np.zeros(p), Sigma, size = n)

    return Y.T @ Y / n

@pytest.fixture
def rng():
    return np.random.default_rng(20240601)

@pytest.fixture
def part4():
    return HemispherePartition(4)

@pytest.fixture
def part6():
    return HemispherePartition(6)
