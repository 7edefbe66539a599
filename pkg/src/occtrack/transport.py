"""Entropic optimal transport between two embedding sets.

The affinity between a source and a target vector is their cosine distance.
The Sinkhorn-Knopp iteration finds the entropic transport plan between the
two sets, and each set is then pulled towards the barycentric projection of
the other under that plan.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidMarginals, NotConverged, ZeroVector

DEFAULT_EPSILON = 0.1
DEFAULT_MAX_ITERS = 1000
DEFAULT_TOL = 1e-6
DEFAULT_ALPHA = 0.5

# above this cost/epsilon ratio the plain kernel exp(-A/eps) risks underflow
_KERNEL_LIMIT = 50.0
# marginal violation is measured every this many iterations
_CHECK_EVERY = 10
# log-domain path: scalings beyond exp(_ABSORB) are folded into the potentials
_ABSORB = 30.0
_EPS_DECAY = 0.5
_STAGE_ITERS = 200
_STAGE_TOL = 1e-4


@dataclass
class TransportPlan:
    flow: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    violation: float
    iterations: int
    converged: bool

    def cost(self, affinity) -> float:
        return float(np.sum(np.asarray(affinity) * self.flow))


def _as_set(x, what):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise DimensionMismatch(f"{what} must be a (count, dim) matrix, got shape {x.shape}")
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0):
        raise ZeroVector(f"{what} contains a zero-norm vector")
    return x, norms


def affinity(source, target) -> np.ndarray:
    """Cosine-distance affinity ``A[m, n] = 1 - cos(source[m], target[n])``."""
    s, sn = _as_set(source, "source")
    t, tn = _as_set(target, "target")
    if s.shape[1] != t.shape[1]:
        raise DimensionMismatch(f"source dim {s.shape[1]} != target dim {t.shape[1]}")
    return np.clip(1.0 - (s / sn[:, None]) @ (t / tn[:, None]).T, 0.0, 2.0)


def _check_marginals(A, mu, nu):
    m, n = A.shape
    mu = np.asarray(mu, dtype=float).ravel()
    nu = np.asarray(nu, dtype=float).ravel()
    if mu.shape != (n,) or nu.shape != (m,):
        raise InvalidMarginals(
            f"marginal sizes ({nu.size}, {mu.size}) do not match a {m}x{n} affinity")
    if np.any(mu <= 0) or np.any(nu <= 0):
        raise InvalidMarginals("marginals must be strictly positive")
    if abs(mu.sum() - nu.sum()) > 1e-9:
        raise InvalidMarginals(f"mass mismatch: sum(mu)={mu.sum()} vs sum(nu)={nu.sum()}")
    return mu, nu


def _sinkhorn_kernel(A, mu, nu, eps, max_iters, tol):
    K = np.exp(-A / eps)
    v = np.ones_like(mu)
    violation = np.inf
    it = 0
    Kt = np.ascontiguousarray(K.T)
    while it < max_iters:
        it += 1
        u = nu / (K @ v)
        v = mu / (Kt @ u)
        if it % _CHECK_EVERY and it < max_iters:
            continue
        # columns are exact after the v-step; rows carry the residual
        violation = np.max(np.abs(u * (K @ v) - nu))
        if violation < tol:
            break
    return u[:, None] * K * v[None, :], violation, it


def _stabilized_stage(A, mu, nu, eps, f, g, max_iters, tol):
    """Kernel iterations on ``exp((f + g - A) / eps)``, folding large scalings into f, g."""
    def kernel():
        return np.exp((f[:, None] + g[None, :] - A) / eps)

    K = kernel()
    u = np.ones_like(nu)
    v = np.ones_like(mu)
    violation = np.inf
    it = 0
    if max_iters <= 0:
        plan = K
        violation = max(np.abs(plan.sum(axis=1) - nu).max(), np.abs(plan.sum(axis=0) - mu).max())
    while it < max_iters:
        it += 1
        u = nu / (K @ v)
        v = mu / (K.T @ u)
        if it % _CHECK_EVERY and it < max_iters:
            continue
        violation = np.max(np.abs(u * (K @ v) - nu))
        if violation < tol:
            break
        if max(np.abs(np.log(u)).max(), np.abs(np.log(v)).max()) > _ABSORB:
            f = f + eps * np.log(u)
            g = g + eps * np.log(v)
            K = kernel()
            u = np.ones_like(nu)
            v = np.ones_like(mu)
    return f + eps * np.log(u), g + eps * np.log(v), violation, it


def _sinkhorn_log(A, mu, nu, eps, max_iters, tol):
    """Log-stabilized Sinkhorn with epsilon scaling (warm-started potentials)."""
    # row/column reduction puts a unit entry in every row and column of the kernel
    f = A.min(axis=1)
    g = (A - f[:, None]).min(axis=0)
    total = 0
    stage_eps = max(eps, float(np.ptp(A)))
    # coarse stages share the iteration budget but always leave some for the last one
    while stage_eps > eps and total + 1 < max_iters:
        budget = min(_STAGE_ITERS, (max_iters - total) // 2)
        f, g, _, it = _stabilized_stage(A, mu, nu, stage_eps, f, g, budget,
                                        max(tol, _STAGE_TOL))
        total += it
        stage_eps = max(eps, stage_eps * _EPS_DECAY)
    f, g, violation, it = _stabilized_stage(A, mu, nu, eps, f, g, max_iters - total, tol)
    return np.exp((f[:, None] + g[None, :] - A) / eps), violation, total + it


def sinkhorn(A, mu, nu, epsilon=DEFAULT_EPSILON, max_iters=DEFAULT_MAX_ITERS,
             tol=DEFAULT_TOL, strict=False) -> TransportPlan:
    """Entropic transport plan for cost ``A`` (m x n).

    ``mu`` prescribes the n column sums and ``nu`` the m row sums. The plan has
    the form ``diag(u) exp(-A/epsilon) diag(v)``; scalings are alternated until
    the largest marginal violation drops below ``tol``. A log-domain iteration is
    used whenever the plain kernel could underflow. With ``strict=True`` a plan
    that misses ``tol`` raises ``NotConverged`` (the plan rides on the exception);
    otherwise ``plan.converged`` is False.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.size == 0:
        raise DimensionMismatch(f"affinity must be a non-empty matrix, got shape {A.shape}")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    mu, nu = _check_marginals(A, mu, nu)

    if A.max() / epsilon < _KERNEL_LIMIT:
        flow, violation, it = _sinkhorn_kernel(A, mu, nu, epsilon, max_iters, tol)
    else:
        flow, violation, it = _sinkhorn_log(A, mu, nu, epsilon, max_iters, tol)
    plan = TransportPlan(flow, nu, mu, float(violation), it, bool(violation < tol))
    if strict and not plan.converged:
        raise NotConverged(
            f"sinkhorn reached {it} iterations with marginal violation {violation:.3g}", plan)
    return plan


def uniform(k: int) -> np.ndarray:
    return np.full(k, 1.0 / k)


def _normalize_rows(x):
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def calibrate_embeddings(source, target, epsilon=DEFAULT_EPSILON, alpha=DEFAULT_ALPHA,
                         max_iters=DEFAULT_MAX_ITERS, tol=DEFAULT_TOL):
    """Re-weight two embedding sets with their transport plan.

    Each source row is blended with the flow-weighted mean of the target rows
    it sends mass to (and vice versa), then renormalized:
    ``s' = normalize((1 - alpha) s + alpha * F_row_normalized @ t)``.
    Returns the calibrated ``(source, target)`` pair with unit-norm rows.
    """
    s, _ = _as_set(source, "source")
    t, _ = _as_set(target, "target")
    s_unit, t_unit = _normalize_rows(s), _normalize_rows(t)
    if alpha == 0:
        if s.shape[1] != t.shape[1]:
            raise DimensionMismatch(f"source dim {s.shape[1]} != target dim {t.shape[1]}")
        return s_unit, t_unit
    A = affinity(s, t)
    m, n = A.shape
    plan = sinkhorn(A, uniform(n), uniform(m), epsilon, max_iters, tol)
    F = plan.flow
    s_bar = (F / F.sum(axis=1, keepdims=True)) @ t_unit
    t_bar = (F / F.sum(axis=0, keepdims=True)).T @ s_unit
    s_new = _normalize_rows((1.0 - alpha) * s_unit + alpha * s_bar)
    t_new = _normalize_rows((1.0 - alpha) * t_unit + alpha * t_bar)
    return s_new, t_new
