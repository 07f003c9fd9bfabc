"""Shared builders for the test suite."""
import numpy as np
import pytest

from mfgl.graph import build_graph, laplacian


def random_points(n, d, seed):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, d))


def small_laplacian(n=20, d=3, seed=0, p=0.5, q=0.5, knn_k=5):
    lf = random_points(n, d, seed)
    return laplacian(build_graph(lf, knn_k=knn_k), p, q)


def two_blob_points(n_per=15, gap=0.8, spread=0.1, d=2, seed=0):
    """Two Gaussian blobs whose kernel cross-weights are tiny but nonzero."""
    rng = np.random.default_rng(seed)
    a = spread * rng.normal(size=(n_per, d))
    b = spread * rng.normal(size=(n_per, d))
    b[:, 0] += gap
    return np.vstack([a, b])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
