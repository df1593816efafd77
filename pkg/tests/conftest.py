import os

os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance: full-scale acceptance criteria (slow ensembles)"
    )
