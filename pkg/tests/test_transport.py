import itertools

import numpy as np
import pytest

from occtrack.assignment import cosine_distance
from occtrack.errors import DimensionMismatch, InvalidMarginals, NotConverged
from occtrack.transport import affinity, calibrate_embeddings, sinkhorn, uniform

from conftest import unit


def exact_square_ot(A):
    """Uniform-marginal square OT: optimum sits at a permutation matrix / n."""
    n = A.shape[0]
    return min(sum(A[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n))) / n


def test_affinity_examples(rng):
    e = np.array([[1.0, 2.0]])
    assert affinity(e, e)[0, 0] == pytest.approx(0.0, abs=1e-15)
    assert affinity([[1.0, 0.0]], [[0.0, 3.0]])[0, 0] == 1.0
    s, t = rng.standard_normal((3, 5)), rng.standard_normal((2, 5))
    A = affinity(s, t)
    for i in range(3):
        for j in range(2):
            assert A[i, j] == pytest.approx(cosine_distance(s[i], t[j]), abs=1e-12)
    np.testing.assert_allclose(affinity(t, s), A.T, atol=1e-15)


def test_affinity_dim_mismatch():
    with pytest.raises(DimensionMismatch):
        affinity(np.ones((2, 3)), np.ones((2, 4)))


def test_single_cell():
    plan = sinkhorn([[0.7]], [1.0], [1.0])
    np.testing.assert_allclose(plan.flow, [[1.0]], atol=1e-12)


def test_constant_cost_uniform_plan():
    m, n = 3, 4
    plan = sinkhorn(np.full((m, n), 0.4), uniform(n), uniform(m))
    np.testing.assert_allclose(plan.flow, np.full((m, n), 1 / (m * n)), atol=1e-12)


def test_antidiagonal_cost_small_eps():
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    # extreme points of the uniform 2x2 polytope: identity/2 (cost 0) and swap/2 (cost 1)
    assert exact_square_ot(A) == 0.0
    plan = sinkhorn(A, uniform(2), uniform(2), epsilon=0.01)
    np.testing.assert_allclose(plan.flow, [[0.5, 0.0], [0.0, 0.5]], atol=1e-3)


def test_invalid_marginals():
    with pytest.raises(InvalidMarginals):
        sinkhorn(np.zeros((2, 2)), [0.5, 0.5], [0.7, 0.7])
    with pytest.raises(InvalidMarginals):
        sinkhorn(np.zeros((2, 2)), [1.0, 0.0], [0.5, 0.5])
    with pytest.raises(InvalidMarginals):
        sinkhorn(np.zeros((2, 3)), uniform(2), uniform(3))


@pytest.mark.parametrize("eps", [0.5, 0.01])
def test_not_converged_is_flagged(rng, eps):
    A = rng.uniform(0, 2, (4, 5))
    plan = sinkhorn(A, uniform(5), uniform(4), epsilon=eps, max_iters=1, tol=1e-15)
    assert not plan.converged and plan.iterations <= 1
    assert plan.violation > 1e-15
    with pytest.raises(NotConverged) as info:
        sinkhorn(A, uniform(5), uniform(4), epsilon=eps, max_iters=1, tol=1e-15, strict=True)
    assert info.value.plan is not None and not info.value.plan.converged


@pytest.mark.parametrize("eps", [1.0, 0.1, 0.01, 0.002])
def test_marginals_and_mass(rng, eps):
    for _ in range(20):
        m, n = rng.integers(1, 8, 2)
        A = affinity(rng.standard_normal((m, 6)), rng.standard_normal((n, 6)))
        mu = rng.uniform(0.1, 1.0, n)
        mu /= mu.sum()
        nu = rng.uniform(0.1, 1.0, m)
        nu /= nu.sum()
        plan = sinkhorn(A, mu, nu, epsilon=eps, max_iters=20000)
        assert plan.converged
        assert np.all(plan.flow >= 0)
        assert np.max(np.abs(plan.flow.sum(axis=1) - nu)) < 1e-6
        assert np.max(np.abs(plan.flow.sum(axis=0) - mu)) < 1e-6
        assert plan.flow.sum() == pytest.approx(mu.sum(), abs=1e-9)


def test_log_and_kernel_paths_agree(rng):
    from occtrack import transport

    A = affinity(rng.standard_normal((5, 4)), rng.standard_normal((6, 4)))
    k = transport._sinkhorn_kernel(A, uniform(6), uniform(5), 0.1, 5000, 1e-12)[0]
    lg = transport._sinkhorn_log(A, uniform(6), uniform(5), 0.1, 5000, 1e-12)[0]
    np.testing.assert_allclose(k, lg, atol=1e-10)


def test_epsilon_monotonicity(rng):
    for _ in range(100):
        m, n = rng.integers(1, 7, 2)
        A = affinity(rng.standard_normal((m, 5)), rng.standard_normal((n, 5)))
        sharp = sinkhorn(A, uniform(n), uniform(m), epsilon=0.01, max_iters=20000)
        smooth = sinkhorn(A, uniform(n), uniform(m), epsilon=1.0)
        assert sharp.cost(A) <= smooth.cost(A) + 1e-6


def test_calibration_alpha_zero_is_normalization(rng):
    s, t = rng.standard_normal((3, 4)) * 5, rng.standard_normal((2, 4))
    s2, t2 = calibrate_embeddings(s, t, alpha=0.0)
    np.testing.assert_allclose(s2, s / np.linalg.norm(s, axis=1, keepdims=True), atol=1e-15)
    np.testing.assert_allclose(t2, t / np.linalg.norm(t, axis=1, keepdims=True), atol=1e-15)


def test_calibration_orthonormal_fixed_point():
    e = np.eye(5)
    s2, t2 = calibrate_embeddings(e, e, epsilon=0.01, alpha=0.5)
    # the plan is (nearly) identity / 5, so every row is pulled onto itself
    plan = sinkhorn(affinity(e, e), uniform(5), uniform(5), epsilon=0.01)
    np.testing.assert_allclose(plan.flow, np.eye(5) / 5, atol=1e-12)
    assert np.max(np.abs(s2 - e)) < 1e-2
    assert np.max(np.abs(t2 - e)) < 1e-2


def test_calibration_keeps_nearest_target(rng):
    e1 = unit(np.r_[1.0, np.zeros(15)])
    noisy = unit(e1 + 0.4 * rng.standard_normal(16))
    target = np.stack([e1, noisy])
    s2, t2 = calibrate_embeddings(e1[None, :], target)
    before = np.argmin([cosine_distance(e1, t) for t in target])
    after = np.argmin([cosine_distance(s2[0], t) for t in target])
    assert before == after == 0


def test_calibration_unit_rows(rng):
    for _ in range(50):
        m, n = rng.integers(1, 9, 2)
        s2, t2 = calibrate_embeddings(rng.standard_normal((m, 6)), rng.standard_normal((n, 6)),
                                      alpha=float(rng.uniform()))
        np.testing.assert_allclose(np.linalg.norm(s2, axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(t2, axis=1), 1.0, atol=1e-12)
