import numpy as np
import pytest

from occtrack.errors import DegenerateState
from occtrack.geometry import BBox
from occtrack.motion import (
    W_POSITION,
    W_VELOCITY,
    KalmanState,
    kf_initiate,
    kf_predict,
    kf_update,
    multi_predict,
    multi_update,
    state_to_bbox,
)

from conftest import random_box


def test_initiate_example():
    s = kf_initiate(BBox(0, 0, 10, 20))
    np.testing.assert_allclose(s.mean, [5, 10, 0.5, 20, 0, 0, 0, 0], atol=0)


def test_round_trip_many(rng):
    for _ in range(1000):
        b = random_box(rng, -500, 500, 300)
        s = kf_initiate(b)
        assert np.all(s.mean[4:] == 0)
        r = state_to_bbox(s)
        np.testing.assert_allclose([r.x_left, r.y_top, r.width, r.height],
                                   [b.x_left, b.y_top, b.width, b.height], atol=1e-9)


def test_state_to_bbox_inverse_example():
    s = KalmanState(np.array([5, 10, 0.5, 20, 1, 1, 0, 0.0]), np.eye(8))
    b = state_to_bbox(s)
    assert (b.x_left, b.y_top, b.width, b.height) == (0, 0, 10, 20)


@pytest.mark.parametrize("a,h", [(0.5, 0.0), (0.0, 10.0), (0.5, -3.0)])
def test_state_to_bbox_degenerate(a, h):
    s = KalmanState(np.array([0, 0, a, h, 0, 0, 0, 0.0]), np.eye(8))
    with pytest.raises(DegenerateState):
        state_to_bbox(s)


def test_predict_zero_velocity_keeps_position():
    s = kf_initiate(BBox(3, 4, 10, 20))
    p = kf_predict(s)
    np.testing.assert_array_equal(p.mean[:4], s.mean[:4])


def test_predict_one_euler_step():
    s = KalmanState(np.array([0, 0, 1, 10, 2, 0, 0, 0.0]), np.eye(8))
    assert kf_predict(s).mean[0] == 2


def _hand_predict(mean, cov):
    F = np.eye(8)
    for i in range(4):
        F[i, i + 4] = 1.0
    h = mean[3]
    q = np.diag(np.array([W_POSITION * h, W_POSITION * h, 1e-2, W_POSITION * h,
                          W_VELOCITY * h, W_VELOCITY * h, 1e-5, W_VELOCITY * h]) ** 2)
    return F @ mean, F @ cov @ F.T + q


def test_trace_grows_without_updates():
    s = kf_initiate(BBox(0, 0, 30, 60))
    mean, cov = s.mean.copy(), s.covariance.copy()
    prev = np.trace(s.covariance)
    for _ in range(20):
        s = kf_predict(s)
        mean, cov = _hand_predict(mean, cov)
        np.testing.assert_allclose(s.mean, mean, rtol=1e-12)
        np.testing.assert_allclose(s.covariance, cov, rtol=1e-12)
        assert np.trace(s.covariance) > prev
        prev = np.trace(s.covariance)


def test_zero_innovation_update():
    s = kf_predict(kf_initiate(BBox(10, 20, 30, 60)))
    u = kf_update(s, state_to_bbox(s))
    np.testing.assert_allclose(u.mean[:4], s.mean[:4], atol=1e-9)


def test_update_shrinks_trace(rng):
    for _ in range(50):
        s = kf_predict(kf_initiate(random_box(rng, 0, 500, 100)))
        u = kf_update(s, random_box(rng, 0, 500, 100))
        assert np.trace(u.covariance) < np.trace(s.covariance)


class ScalarKalman:
    """Position/velocity filter for one coordinate; the 8-D filter is four of these."""

    def __init__(self, z, pos_std, vel_std):
        self.x = np.array([z, 0.0])
        self.P = np.diag([pos_std**2, vel_std**2])

    def predict(self, q_pos, q_vel):
        F = np.array([[1.0, 1.0], [0.0, 1.0]])
        self.x = F @ self.x
        self.P = F @ self.P @ F.T + np.diag([q_pos**2, q_vel**2])

    def update(self, z, r):
        s = self.P[0, 0] + r**2
        k = self.P[:, 0] / s
        self.x = self.x + k * (z - self.x[0])
        self.P = self.P - np.outer(k, self.P[0, :])


def _coordinate_oracle(box, measurements):
    z0 = np.array([box.center[0], box.center[1], box.width / box.height, box.height])
    h = z0[3]
    pos = [2 * W_POSITION * h, 2 * W_POSITION * h, 1e-2, 2 * W_POSITION * h]
    vel = [10 * W_VELOCITY * h, 10 * W_VELOCITY * h, 1e-5, 10 * W_VELOCITY * h]
    filters = [ScalarKalman(z0[i], pos[i], vel[i]) for i in range(4)]
    trace = []
    for z in measurements:
        h = filters[3].x[0]
        qp = [W_POSITION * h, W_POSITION * h, 1e-2, W_POSITION * h]
        qv = [W_VELOCITY * h, W_VELOCITY * h, 1e-5, W_VELOCITY * h]
        for i, f in enumerate(filters):
            f.predict(qp[i], qv[i])
        h = filters[3].x[0]
        r = [W_POSITION * h, W_POSITION * h, 1e-1, W_POSITION * h]
        zz = [z.center[0], z.center[1], z.width / z.height, z.height]
        for i, f in enumerate(filters):
            f.update(zz[i], r[i])
        trace.append(np.array([f.x[0] for f in filters] + [f.x[1] for f in filters]))
    return trace


def test_stationary_target_matches_scalar_oracle():
    box = BBox(100, 50, 40, 80)
    measurements = [box] * 10
    expected = _coordinate_oracle(box, measurements)
    s = kf_initiate(box)
    for z, want in zip(measurements, expected):
        s = kf_update(kf_predict(s), z)
        np.testing.assert_allclose(s.mean, want, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(s.mean[:2], box.center, atol=1e-6)


def test_noisy_track_matches_scalar_oracle(rng):
    box = BBox(100, 50, 40, 80)
    measurements = [BBox(100 + 2 * k + rng.normal(0, 2), 50 + k + rng.normal(0, 2),
                         40 + rng.normal(0, 1), 80 + rng.normal(0, 1)) for k in range(1, 30)]
    expected = _coordinate_oracle(box, measurements)
    s = kf_initiate(box)
    for z, want in zip(measurements, expected):
        s = kf_update(kf_predict(s), z)
        np.testing.assert_allclose(s.mean, want, rtol=1e-9, atol=1e-9)


def test_batch_matches_single(rng):
    states = [kf_predict(kf_initiate(random_box(rng, 0, 300, 80))) for _ in range(6)]
    zs = [random_box(rng, 0, 300, 80) for _ in range(6)]
    means = np.stack([s.mean for s in states])
    covs = np.stack([s.covariance for s in states])
    pm, pc = multi_predict(means, covs)
    meas = np.array([[z.center[0], z.center[1], z.width / z.height, z.height] for z in zs])
    um, uc = multi_update(pm, pc, meas)
    for k, (s, z) in enumerate(zip(states, zs)):
        single = kf_update(kf_predict(s), z)
        np.testing.assert_allclose(um[k], single.mean, rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(uc[k], single.covariance, rtol=1e-10, atol=1e-10)


def test_covariance_stays_spd_over_long_run(rng):
    s = kf_initiate(BBox(0, 0, 30, 60))
    for k in range(1000):
        s = kf_predict(s)
        z = BBox(k * 1.5 + rng.normal(0, 2), k * 0.5 + rng.normal(0, 2), 30, 60)
        s = kf_update(s, z)
        np.testing.assert_allclose(s.covariance, s.covariance.T, rtol=1e-9, atol=0)
        assert np.all(np.diag(s.covariance) > 0)
        np.linalg.cholesky(s.covariance)
