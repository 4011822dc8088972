import numpy as np
import pytest

from pvcodec import pcio
from pvcodec.models import NeuralModel, synthetic_weights

# Committed-fixture identity: the parity reference file in tests/fixtures was
# produced by the trainer from the PVW regenerated with exactly this seed/K.
FIXTURE_WEIGHTS_SEED = 20260811
FIXTURE_WEIGHTS_K = 32


def random_cloud(rng, max_points=4096, max_precision=8, min_points=1):
    """One fuzzed integer cloud: log-uniform size, random precision."""
    precision = int(rng.integers(1, max_precision + 1))
    hi = 1 << precision
    cap = min(max_points, hi ** 3)
    lo = min(min_points, cap)
    n = int(np.exp(rng.uniform(np.log(lo), np.log(cap + 1))))
    n = max(lo, min(n, cap))
    pts = rng.integers(0, hi, size=(n, 3))
    return pcio.PointCloud(np.unique(pts, axis=0), precision)


def sphere_cloud(n_points=55000, precision=9, seed=1234, noise=0.006):
    """Noisy spherical shell: the dense, highly predictable surface fixture."""
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(n_points, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    radius = 0.42 + rng.normal(scale=noise, size=(n_points, 1))
    raw = pcio.RawPointCloud(0.5 + v * radius)
    return pcio.quantize(raw, precision)


@pytest.fixture(scope="session")
def fixture_weights():
    return synthetic_weights(FIXTURE_WEIGHTS_SEED, k=FIXTURE_WEIGHTS_K)


@pytest.fixture(scope="session")
def neural_model(fixture_weights):
    return NeuralModel(fixture_weights)


@pytest.fixture(scope="session")
def sphere_fixture():
    return sphere_cloud()
