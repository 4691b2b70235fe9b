import numpy as np
import pytest

from quanting.dataio import boston_split


class StepScorer:
    """Classifier family member answering a fixed 0/1 (or soft) score."""

    def __init__(self, value):
        self.value = float(value)

    def predict_score(self, X):
        return np.full(np.asarray(X).shape[0], self.value)


@pytest.fixture(scope="session")
def boston():
    return boston_split(seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
