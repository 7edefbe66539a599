"""Axis-aligned box arithmetic.

Boxes are stored as ``(x_left, y_top, width, height)`` in pixels, the layout of
MOTChallenge files. Center form is only used internally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidBox

_V_SCALE = 4.0 / math.pi**2


@dataclass(frozen=True)
class BBox:
    x_left: float
    y_top: float
    width: float
    height: float

    def __post_init__(self):
        vals = (self.x_left, self.y_top, self.width, self.height)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidBox(f"non-finite box {vals}")
        if self.width <= 0 or self.height <= 0:
            raise InvalidBox(f"box must have positive size, got {vals}")

    @classmethod
    def from_center(cls, cx, cy, width, height):
        return cls(cx - width / 2.0, cy - height / 2.0, width, height)

    @property
    def x_right(self):
        return self.x_left + self.width

    @property
    def y_bottom(self):
        return self.y_top + self.height

    @property
    def center(self):
        return (self.x_left + self.width / 2.0, self.y_top + self.height / 2.0)

    @property
    def area(self):
        return self.width * self.height

    def as_tlwh(self):
        return np.array([self.x_left, self.y_top, self.width, self.height], dtype=float)

    def translate(self, dx, dy):
        return BBox(self.x_left + dx, self.y_top + dy, self.width, self.height)


def _intersection(a: BBox, b: BBox) -> float:
    iw = min(a.x_right, b.x_right) - max(a.x_left, b.x_left)
    ih = min(a.y_bottom, b.y_bottom) - max(a.y_top, b.y_top)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: BBox, b: BBox) -> float:
    if a == b:
        return 1.0
    inter = _intersection(a, b)
    if inter == 0.0:
        return 0.0
    # edges recomputed from x + w can round past the stored size
    return min(inter / (a.area + b.area - inter), 1.0)


def iou_distance(a: BBox, b: BBox) -> float:
    return 1.0 - iou(a, b)


def aspect_penalty(pred: BBox, gt: BBox) -> float:
    """Aspect-ratio consistency term ``v`` of the CIoU loss, in [0, 1]."""
    d = math.atan(gt.width / gt.height) - math.atan(pred.width / pred.height)
    return _V_SCALE * d * d


def ciou_loss(pred: BBox, gt: BBox) -> float:
    """Complete-IoU regression loss between a predicted and a ground-truth box.

    ``1 - (IoU - rho^2/c^2 - v^2/(1 - IoU + v))`` with ``rho`` the distance between
    centers, ``c`` the diagonal of the smallest enclosing rectangle and ``v`` the
    aspect penalty. The last term is taken as 0 when its denominator vanishes.
    """
    overlap = iou(pred, gt)
    (px, py), (gx, gy) = pred.center, gt.center
    rho2 = (px - gx) ** 2 + (py - gy) ** 2
    cw = max(pred.x_right, gt.x_right) - min(pred.x_left, gt.x_left)
    ch = max(pred.y_bottom, gt.y_bottom) - min(pred.y_top, gt.y_top)
    c2 = cw * cw + ch * ch
    v = aspect_penalty(pred, gt)
    denom = 1.0 - overlap + v
    shape_term = v * v / denom if denom > 0 else 0.0
    return 1.0 - (overlap - rho2 / c2 - shape_term)


def tlwh_array(boxes) -> np.ndarray:
    """Stack boxes into an ``(n, 4)`` tlwh array."""
    if len(boxes) == 0:
        return np.zeros((0, 4))
    return np.array([[b.x_left, b.y_top, b.width, b.height] for b in boxes], dtype=float)


def iou_matrix(a_tlwh: np.ndarray, b_tlwh: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two ``(n, 4)`` / ``(m, 4)`` tlwh arrays."""
    a = np.asarray(a_tlwh, dtype=float).reshape(-1, 4)
    b = np.asarray(b_tlwh, dtype=float).reshape(-1, 4)
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    ax2 = a[:, 0] + a[:, 2]
    ay2 = a[:, 1] + a[:, 3]
    bx2 = b[:, 0] + b[:, 2]
    by2 = b[:, 1] + b[:, 3]
    iw = np.minimum(ax2[:, None], bx2[None, :]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(ay2[:, None], by2[None, :]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    return np.minimum(inter / union, 1.0)
