"""Gated linear assignment and the cost matrices fed to it."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionMismatch, ZeroVector
from .geometry import iou_matrix, tlwh_array

# gated-out pairs are pushed this far above the gate so that they are only
# chosen when nothing else is available, and then dropped
SENTINEL_OFFSET = 1e5


@dataclass
class AssignmentResult:
    matches: list = field(default_factory=list)
    unmatched_rows: list = field(default_factory=list)
    unmatched_cols: list = field(default_factory=list)
    cost: float = 0.0


def cosine_distance(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroVector("cosine distance is undefined for a zero vector")
    return float(1.0 - np.dot(u, v) / (nu * nv))


def _unit_rows(x, what):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(0 if x.size == 0 else 1, -1)
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0):
        raise ZeroVector(f"zero-norm {what} embedding")
    return x / norms[:, None]


def embedding_cost_matrix(track_embeddings, det_embeddings) -> np.ndarray:
    """Cosine distance between every track and detection embedding."""
    if len(track_embeddings) == 0 or len(det_embeddings) == 0:
        return np.zeros((len(track_embeddings), len(det_embeddings)))
    t = _unit_rows(np.stack([np.asarray(e, dtype=float) for e in track_embeddings]), "track")
    d = _unit_rows(np.stack([np.asarray(e, dtype=float) for e in det_embeddings]), "detection")
    if t.shape[1] != d.shape[1]:
        raise DimensionMismatch(f"embedding dims differ: {t.shape[1]} vs {d.shape[1]}")
    return np.clip(1.0 - t @ d.T, 0.0, 2.0)


def iou_cost_matrix(track_boxes, det_boxes) -> np.ndarray:
    return 1.0 - iou_matrix(tlwh_array(track_boxes), tlwh_array(det_boxes))


def hungarian(costs, gate: float) -> AssignmentResult:
    """Minimum-cost assignment on a rectangular matrix, with pairs above ``gate`` rejected.

    Gated entries are replaced by a sentinel before solving so they cannot
    distort the optimum over admissible pairs; any sentinel pair the solver
    still picks (forced by shape) is reported as unmatched.
    """
    costs = np.asarray(costs, dtype=float)
    if costs.ndim != 2:
        raise DimensionMismatch(f"cost matrix must be 2-D, got shape {costs.shape}")
    n_rows, n_cols = costs.shape
    if n_rows == 0 or n_cols == 0:
        return AssignmentResult([], list(range(n_rows)), list(range(n_cols)))
    if not np.all(np.isfinite(costs)):
        raise ValueError("cost matrix contains non-finite entries")
    if gate <= 0:
        raise ValueError("gate must be positive")

    gated = np.where(costs > gate, gate + SENTINEL_OFFSET, costs)
    rows, cols = linear_sum_assignment(gated)

    matches = []
    total = 0.0
    for r, c in zip(rows.tolist(), cols.tolist()):
        if costs[r, c] <= gate:
            matches.append((r, c))
            total += costs[r, c]
    matched_r = {r for r, _ in matches}
    matched_c = {c for _, c in matches}
    return AssignmentResult(
        matches,
        [r for r in range(n_rows) if r not in matched_r],
        [c for c in range(n_cols) if c not in matched_c],
        float(total),
    )
