"""Constant-velocity Kalman filter over ``[cx, cy, a, h]`` box measurements.

The state is ``[cx, cy, a, h, vcx, vcy, va, vh]`` with ``a = w / h``. Noise
levels scale with the box height so that small and large objects get comparable
relative uncertainty.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateState
from .geometry import BBox

NDIM = 4

W_POSITION = 1.0 / 20
W_VELOCITY = 1.0 / 160

_F = np.eye(2 * NDIM)
_F[:NDIM, NDIM:] = np.eye(NDIM)
_H = np.eye(NDIM, 2 * NDIM)


@dataclass
class KalmanState:
    mean: np.ndarray
    covariance: np.ndarray

    def copy(self):
        return KalmanState(self.mean.copy(), self.covariance.copy())


def bbox_to_measurement(b: BBox) -> np.ndarray:
    cx, cy = b.center
    return np.array([cx, cy, b.width / b.height, b.height])


def _process_std(h, w_p=W_POSITION, w_v=W_VELOCITY):
    h = np.asarray(h, dtype=float)
    one = np.ones_like(h)
    return np.stack([w_p * h, w_p * h, 1e-2 * one, w_p * h,
                     w_v * h, w_v * h, 1e-5 * one, w_v * h], axis=-1)


def _measurement_std(h, w_p=W_POSITION):
    h = np.asarray(h, dtype=float)
    return np.stack([w_p * h, w_p * h, 1e-1 * np.ones_like(h), w_p * h], axis=-1)


def kf_initiate(measurement: BBox, w_p=W_POSITION, w_v=W_VELOCITY) -> KalmanState:
    z = bbox_to_measurement(measurement)
    mean = np.concatenate([z, np.zeros(NDIM)])
    h = z[3]
    std = np.array([2 * w_p * h, 2 * w_p * h, 1e-2, 2 * w_p * h,
                    10 * w_v * h, 10 * w_v * h, 1e-5, 10 * w_v * h])
    return KalmanState(mean, np.diag(std**2))


def kf_predict(s: KalmanState, w_p=W_POSITION, w_v=W_VELOCITY) -> KalmanState:
    q = np.diag(_process_std(s.mean[3], w_p, w_v) ** 2)
    mean = _F @ s.mean
    cov = _F @ s.covariance @ _F.T + q
    return KalmanState(mean, 0.5 * (cov + cov.T))


def kf_update(s: KalmanState, z: BBox, w_p=W_POSITION) -> KalmanState:
    meas = bbox_to_measurement(z)
    r = np.diag(_measurement_std(s.mean[3], w_p) ** 2)
    proj_mean = _H @ s.mean
    proj_cov = _H @ s.covariance @ _H.T + r
    # gain = P H^T S^-1, solved rather than inverted
    gain = np.linalg.solve(proj_cov, _H @ s.covariance).T
    mean = s.mean + gain @ (meas - proj_mean)
    cov = s.covariance - gain @ proj_cov @ gain.T
    return KalmanState(mean, 0.5 * (cov + cov.T))


def state_to_bbox(s: KalmanState) -> BBox:
    cx, cy, a, h = s.mean[:NDIM]
    if not (h > 0 and a > 0):
        raise DegenerateState(f"cannot convert state with a={a}, h={h} to a box")
    w = a * h
    return BBox(cx - w / 2.0, cy - h / 2.0, w, h)


def state_tlwh(mean: np.ndarray) -> np.ndarray:
    """Vectorized ``state_to_bbox`` for an ``(n, 8)`` stack of means; no validation."""
    mean = np.atleast_2d(mean)
    w = mean[:, 2] * mean[:, 3]
    return np.stack([mean[:, 0] - w / 2, mean[:, 1] - mean[:, 3] / 2, w, mean[:, 3]], axis=1)


def multi_predict(means: np.ndarray, covs: np.ndarray, w_p=W_POSITION, w_v=W_VELOCITY):
    """Predict ``n`` states at once. ``means`` is ``(n, 8)``, ``covs`` ``(n, 8, 8)``."""
    std = _process_std(means[:, 3], w_p, w_v)
    q = np.zeros_like(covs)
    idx = np.arange(2 * NDIM)
    q[:, idx, idx] = std**2
    means = means @ _F.T
    covs = _F @ covs @ _F.T + q
    return means, 0.5 * (covs + np.swapaxes(covs, 1, 2))


def multi_update(means, covs, measurements, w_p=W_POSITION):
    """Correct ``n`` states with ``(n, 4)`` measurements in ``[cx, cy, a, h]`` form."""
    std = _measurement_std(means[:, 3], w_p)
    proj_cov = covs[:, :NDIM, :NDIM].copy()
    idx = np.arange(NDIM)
    proj_cov[:, idx, idx] += std**2
    ph = covs[:, :, :NDIM]
    gain = np.swapaxes(np.linalg.solve(proj_cov, np.swapaxes(ph, 1, 2)), 1, 2)
    innovation = measurements - means[:, :NDIM]
    means = means + np.einsum("nij,nj->ni", gain, innovation)
    covs = covs - gain @ proj_cov @ np.swapaxes(gain, 1, 2)
    return means, 0.5 * (covs + np.swapaxes(covs, 1, 2))
