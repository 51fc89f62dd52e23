from datetime import datetime, timedelta

import numpy as np
import pytest

from loadcast.features import FeatureMatrix


def make_matrix(X, y, names=None, start=datetime(2020, 1, 1)) -> FeatureMatrix:
    """FeatureMatrix from raw arrays with generated hourly instants."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    names = names or [f"x{j}" for j in range(X.shape[1])]
    instants = [start + timedelta(hours=i) for i in range(X.shape[0])]
    return FeatureMatrix(names, X, np.asarray(y, dtype=np.float64), instants)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
