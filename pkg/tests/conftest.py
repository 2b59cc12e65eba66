import numpy as np
import pytest
from hypothesis import settings

from leafann import kernels
from leafann.engine import IndexParams, build_index
from leafann.synthetic import gaussian

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(params=kernels.available_backends())
def be(request):
    """Every kernel backend that is importable here."""
    return kernels.get_backend(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_data():
    x = gaussian(3040, 16, seed=3, n_centers=12)
    return x[:3000], x[3000:]


@pytest.fixture(scope="session")
def small_index(small_data):
    x, _ = small_data
    return build_index(x, IndexParams(n_clusters=24, graph=True, cluster_stats=True, seed=0), "l2")
