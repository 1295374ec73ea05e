import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from poisbayes import Dataset


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        status = "PASS" if report.passed else "FAIL"
        name = report.nodeid.split("::")[-1]
        print(f"\n[acceptance] {status} {name} ({report.duration:.1f}s)")


@pytest.fixture
def toy_1d():
    """Ten counts from lambda = e^0.7, unit design column."""
    rng = np.random.default_rng(7)
    y = rng.poisson(np.exp(0.7), 10)
    return Dataset(y=y, X=np.ones((10, 1)), column_names=("b0",))


@pytest.fixture
def toy_2d():
    rng = np.random.default_rng(21)
    n = 30
    X = np.column_stack([np.ones(n), rng.standard_normal(n)])
    beta = np.array([0.8, 0.5])
    y = rng.poisson(np.exp(X @ beta))
    return Dataset(y=y, X=X, column_names=("b0", "b1")), beta
