"""Training-objective kernels: classification, identity and their sum.

Both cross-entropies use sum reduction and clamp probabilities at ``1e-12``
before taking logs, so saturated inputs stay finite.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit

CLAMP = 1e-12


def bce_loss(logits, labels) -> float:
    """Summed binary cross-entropy of sigmoid(logits) against 0/1 labels."""
    p = np.asarray(logits, dtype=float).ravel()
    y = np.asarray(labels, dtype=float).ravel()
    if p.shape != y.shape:
        raise ValueError(f"{p.size} logits vs {y.size} labels")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    prob = expit(p)
    # 1 - sigmoid(p) == sigmoid(-p), which keeps precision for large p
    pos = np.log(np.maximum(prob, CLAMP))
    neg = np.log(np.maximum(expit(-p), CLAMP))
    return float(-np.sum(y * pos + (1.0 - y) * neg))


def reid_ce_loss(probs, labels) -> float:
    """Summed cross-entropy of a ``(V, K)`` identity distribution against one-hot labels.

    ``labels`` may be a one-hot ``(V, K)`` matrix or a length-V vector of class indices.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    labels = np.asarray(labels)
    if labels.ndim == 1 and probs.shape[0] == labels.shape[0] and labels.dtype.kind in "iu":
        onehot = np.zeros_like(probs)
        onehot[np.arange(len(labels)), labels] = 1.0
    else:
        onehot = np.atleast_2d(labels).astype(float)
    if onehot.shape != probs.shape:
        raise ValueError(f"labels shape {onehot.shape} does not match probs {probs.shape}")
    if np.any(probs < 0) or not np.allclose(probs.sum(axis=1), 1.0, atol=1e-9):
        raise ValueError("each row of probs must be a probability distribution")
    return float(-np.sum(onehot * np.log(np.maximum(probs, CLAMP))))


def total_loss(l_cls, l_reg, l_reid) -> float:
    return float(l_cls + l_reg + l_reid)
