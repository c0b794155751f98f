import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def ball_points(rng, count, n, radius=0.95):
    """Uniform sample of Euclidean-ball coordinates with ``|x| < radius``."""
    X = rng.normal(size=(count, n))
    r = radius * rng.uniform(0.0, 1.0, count) ** (1.0 / n)
    return X * (r / np.linalg.norm(X, axis=1))[:, None]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
