import numpy as np
import pytest

from conftest import random_points, two_blob_points
from mfgl.exceptions import (
    DenseLimitExceeded,
    DuplicatePointScale,
    InvalidConfig,
    ZeroDegree,
)
from mfgl.graph import (
    AffinityGraph,
    GraphLaplacian,
    build_graph,
    laplacian,
    self_adjointness_check,
    self_tuning_scales,
    weight_columns,
    weighted_inner,
)


def brute_force_weights(lf, knn_k):
    """Independent O(N^2) reimplementation of the kernel from its formula."""
    n = lf.shape[0]
    dist = np.sqrt(((lf[:, None, :] - lf[None, :, :]) ** 2).sum(axis=2))
    scales = np.array([np.sort(dist[i])[knn_k] for i in range(n)])
    w = np.exp(-(dist**2) / np.outer(scales, scales))
    np.fill_diagonal(w, 0.0)
    return 0.5 * (w + w.T), scales


def test_two_points_weight_is_exp_minus_one():
    lf = np.array([[0.0, 0.0], [0.0, 3.7]])
    g = build_graph(lf, knn_k=1)
    assert g.weights[0, 1] == pytest.approx(np.exp(-1.0), abs=1e-15)
    assert g.scales[0] == pytest.approx(3.7)


def test_weights_symmetric_zero_diagonal(rng):
    g = build_graph(rng.normal(size=(12, 3)), knn_k=4)
    assert np.array_equal(g.weights, g.weights.T)
    assert np.all(np.diag(g.weights) == 0.0)
    assert np.all(g.weights >= 0.0)


def test_weights_match_brute_force_oracle():
    lf = random_points(10, 2, seed=3)
    g = build_graph(lf, knn_k=3)
    w_ref, scales_ref = brute_force_weights(lf, 3)
    assert np.abs(g.scales - scales_ref).max() < 1e-12
    assert np.abs(g.weights - w_ref).max() < 1e-12
    assert np.abs(g.degrees - w_ref.sum(axis=1)).max() < 1e-12


def test_lazy_columns_match_full_matrix():
    lf = random_points(30, 3, seed=7)
    scales = self_tuning_scales(lf, 5)
    g = build_graph(lf, knn_k=5)
    idx = np.array([0, 4, 17, 29])
    cols = weight_columns(lf, scales, idx)
    assert cols.shape == (30, 4)
    assert np.abs(cols - g.weights[:, idx]).max() < 1e-12


def test_duplicate_points_rejected():
    lf = np.array([[1.0, 2.0], [1.0, 2.0], [3.0, 4.0]])
    with pytest.raises(DuplicatePointScale):
        self_tuning_scales(lf, 1)


def test_knn_k_bounds():
    lf = random_points(5, 2, seed=0)
    with pytest.raises(InvalidConfig):
        self_tuning_scales(lf, 0)
    with pytest.raises(InvalidConfig):
        self_tuning_scales(lf, 5)


def test_dense_limit_enforced():
    lf = random_points(25, 2, seed=0)
    with pytest.raises(DenseLimitExceeded):
        build_graph(lf, knn_k=3, dense_limit=20)


def test_two_node_symmetric_laplacian():
    lf = np.array([[0.0], [1.0]])
    gl = laplacian(build_graph(lf, knn_k=1), 0.5, 0.5)
    assert np.allclose(gl.matrix, [[1.0, -1.0], [-1.0, 1.0]], atol=1e-12)
    assert np.allclose(np.sort(np.linalg.eigvalsh(gl.matrix)), [0.0, 2.0], atol=1e-12)


def test_random_walk_rows_sum_to_zero():
    gl = laplacian(build_graph(random_points(15, 3, seed=2), knn_k=4), 1.0, 0.0)
    assert np.abs(gl.matrix.sum(axis=1)).max() < 1e-12


def test_general_pq_matches_elementwise_formula():
    lf = random_points(6, 2, seed=5)
    g = build_graph(lf, knn_k=2)
    gl = laplacian(g, 0.3, 0.7)
    d = g.degrees
    ref = np.empty((6, 6))
    for i in range(6):
        for j in range(6):
            lij = (d[i] if i == j else 0.0) - g.weights[i, j]
            ref[i, j] = d[i] ** -0.3 * lij * d[j] ** -0.7
    assert np.abs(gl.matrix - ref).max() < 1e-12


def test_symmetric_laplacian_is_psd(rng):
    for seed in range(5):
        gl = laplacian(build_graph(random_points(18, 3, seed=seed), knn_k=4), 0.5, 0.5)
        assert np.array_equal(gl.matrix, gl.matrix.T)
        assert np.linalg.eigvalsh(gl.matrix).min() >= -1e-10


def test_kernel_vector_is_annihilated():
    # L (D^q 1) = 0 for every (p, q)
    for p, q in [(0.5, 0.5), (1.0, 0.0), (0.3, 0.7)]:
        g = build_graph(random_points(14, 2, seed=9), knn_k=4)
        gl = laplacian(g, p, q)
        v = g.degrees**q
        rel = np.abs(gl.matrix @ v).max() / np.abs(v).max()
        assert rel < 1e-10


def test_eigenvalues_lie_in_shift_interval():
    for p, q in [(0.5, 0.5), (1.0, 0.0)]:
        for seed in range(3):
            g = build_graph(random_points(16, 3, seed=seed), knn_k=4)
            gl = laplacian(g, p, q)
            lam = np.linalg.eigvals(gl.matrix).real
            a = 2.0 * np.max(g.degrees ** (1.0 - p - q))
            assert gl.shift_bound == pytest.approx(a)
            assert lam.min() > -1e-10
            assert lam.max() < a + 1e-10


def test_similarity_to_symmetric_member():
    g = build_graph(random_points(12, 2, seed=4), knn_k=3)
    gl = laplacian(g, 1.0, 0.0)
    s = g.degrees**0.5  # D^{(p-q)/2}
    conj = (s[:, None] * gl.matrix) / s[None, :]
    assert np.abs(conj - conj.T).max() < 1e-10
    assert np.abs(conj - gl.sym_matrix).max() < 1e-10


def test_scale_invariance_of_weights():
    lf = random_points(13, 3, seed=6)
    g1 = build_graph(lf, knn_k=4)
    g2 = build_graph(2.5 * lf, knn_k=4)
    assert np.abs(g1.weights - g2.weights).max() < 1e-12


def test_zero_degree_detected():
    w = np.zeros((3, 3))
    w[0, 1] = w[1, 0] = 1.0  # node 2 isolated
    with pytest.raises(ZeroDegree):
        AffinityGraph(
            weights=w, degrees=w.sum(axis=1), scales=np.ones(3), knn_k=1
        )


def test_weighted_inner_reduces_to_dot_for_equal_pq(rng):
    g = build_graph(random_points(10, 2, seed=1), knn_k=3)
    u, v = rng.normal(size=(2, 10))
    assert weighted_inner(u, v, g, 0.5, 0.5) == pytest.approx(float(u @ v))


def test_weighted_inner_ones_gives_total_degree():
    g = build_graph(random_points(9, 2, seed=8), knn_k=3)
    ones = np.ones(9)
    assert weighted_inner(ones, ones, g, 1.0, 0.0) == pytest.approx(
        float(g.degrees.sum())
    )


def test_weighted_inner_matches_elementwise_oracle(rng):
    g = build_graph(random_points(11, 3, seed=2), knn_k=3)
    u, v = rng.normal(size=(2, 11))
    oracle = sum(u[i] * g.degrees[i] * v[i] for i in range(11))
    assert weighted_inner(u, v, g, 1.0, 0.0) == pytest.approx(oracle)


def test_self_adjointness_in_weighted_inner():
    for p, q in [(0.5, 0.5), (1.0, 0.0)]:
        gl = laplacian(build_graph(random_points(12, 2, seed=3), knn_k=3), p, q)
        assert self_adjointness_check(gl) <= 1e-10


def test_self_adjointness_negative_control(rng):
    g = build_graph(random_points(12, 2, seed=3), knn_k=3)
    fake = GraphLaplacian(graph=g, p=0.5, q=0.5, matrix=rng.normal(size=(12, 12)))
    assert self_adjointness_check(fake) > 1e-6
