"""Background-paste erasing and the occlusion-aware channel attention kernel.

``random_erase`` covers one side of selected objects with a patch of real
background cut from elsewhere in the same frame, and returns a mask marking
the covered pixels. ``oaa_forward`` re-weights feature channels with a gate
computed from second-order channel statistics; ``mask_loss`` penalizes any
response left on the covered pixels.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import DimensionMismatch, NoValidCrop
from .geometry import iou_matrix

LOCATIONS = ("left", "right", "bottom", "top")
SCOPES = (1 / 3, 1 / 4, 1 / 5, 1 / 6)
MAX_CROP_ATTEMPTS = 1000


def _round(x):
    return int(np.floor(x + 0.5))


def _pixel_box(b, width, height):
    x0 = min(max(_round(b.x_left), 0), width - 1)
    y0 = min(max(_round(b.y_top), 0), height - 1)
    x1 = min(max(_round(b.x_right), x0 + 1), width)
    y1 = min(max(_round(b.y_bottom), y0 + 1), height)
    return x0, y0, x1, y1


def erase_region(x0, y0, x1, y1, loc, scope):
    """Pixel rectangle ``(x0, y0, x1, y1)`` covering ``scope`` of the box on side ``loc``."""
    if loc in ("top", "bottom"):
        depth = max(1, _round(scope * (y1 - y0)))
        return (x0, y0, x1, y0 + depth) if loc == "top" else (x0, y1 - depth, x1, y1)
    if loc in ("left", "right"):
        depth = max(1, _round(scope * (x1 - x0)))
        return (x0, y0, x0 + depth, y1) if loc == "left" else (x1 - depth, y0, x1, y1)
    raise ValueError(f"unknown location {loc!r}")


def random_erase(img, boxes, tau=0.1, ratio=0.5, rng=None,
                 locations=LOCATIONS, scopes=SCOPES, return_crops=False):
    """Occlude a random subset of ``boxes`` with background patches.

    ``img`` is an ``(H, W, 3)`` array. ``round(ratio * len(boxes))`` boxes are
    chosen without replacement; each gets a side strip (location and scope
    drawn from ``locations`` and ``scopes``) replaced by a same-sized patch
    sampled from the original frame, resampled until its IoU with every box
    is below ``tau``. Returns ``(image, mask)`` with mask 0 on replaced pixels
    and 1 elsewhere; with ``return_crops`` also the list of
    ``(source_rect, target_rect)`` pairs.
    """
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionMismatch(f"expected an (H, W, 3) image, got shape {img.shape}")
    rng = np.random.default_rng(rng)
    height, width = img.shape[:2]
    out = img.copy()
    mask = np.ones((height, width), dtype=np.uint8)
    crops = []
    n = _round(ratio * len(boxes))
    if n == 0:
        return (out, mask, crops) if return_crops else (out, mask)

    all_tlwh = np.array([[b.x_left, b.y_top, b.width, b.height] for b in boxes])
    chosen = rng.choice(len(boxes), size=n, replace=False)
    for k in chosen:
        loc = locations[rng.integers(len(locations))]
        scope = scopes[rng.integers(len(scopes))]
        tx0, ty0, tx1, ty1 = erase_region(*_pixel_box(boxes[k], width, height), loc, scope)
        cw, ch = tx1 - tx0, ty1 - ty0
        for _ in range(MAX_CROP_ATTEMPTS):
            sx = int(rng.integers(0, width - cw + 1))
            sy = int(rng.integers(0, height - ch + 1))
            overlap = iou_matrix(np.array([[sx, sy, cw, ch]], dtype=float), all_tlwh)
            if np.all(overlap < tau):
                break
        else:
            raise NoValidCrop(
                f"no background block of {cw}x{ch} px with IoU < {tau} after "
                f"{MAX_CROP_ATTEMPTS} attempts")
        out[ty0:ty1, tx0:tx1] = img[sy:sy + ch, sx:sx + cw]
        mask[ty0:ty1, tx0:tx1] = 0
        crops.append(((sx, sy, sx + cw, sy + ch), (tx0, ty0, tx1, ty1)))
    return (out, mask, crops) if return_crops else (out, mask)


def channel_covariance(g):
    """Covariance of the channels of an ``(h, w, c)`` map over spatial positions."""
    flat = g.reshape(-1, g.shape[-1]).T
    centered = flat - flat.mean(axis=1, keepdims=True)
    return centered @ centered.T / flat.shape[1]


def oaa_forward(f, w_reduce, w_linear, b_linear):
    """Occlusion-aware attention on an ``(h, w, c)`` feature map.

    Channels are reduced with ``w_reduce`` (c x c'), their c' x c' covariance
    is flattened and mapped to a per-channel gate
    ``sigmoid(vec(C) @ w_linear + b_linear)``, and the input is scaled by that
    gate. Returns ``(output, gate)``.
    """
    f = np.asarray(f, dtype=float)
    w_reduce = np.asarray(w_reduce, dtype=float)
    w_linear = np.asarray(w_linear, dtype=float)
    b_linear = np.asarray(b_linear, dtype=float)
    if f.ndim != 3:
        raise DimensionMismatch(f"feature map must be (h, w, c), got shape {f.shape}")
    c = f.shape[2]
    if w_reduce.ndim != 2 or w_reduce.shape[0] != c:
        raise DimensionMismatch(f"w_reduce must be ({c}, c'), got {w_reduce.shape}")
    c_red = w_reduce.shape[1]
    if w_linear.shape != (c_red * c_red, c) or b_linear.shape != (c,):
        raise DimensionMismatch(
            f"w_linear must be ({c_red * c_red}, {c}) and b_linear ({c},), "
            f"got {w_linear.shape} and {b_linear.shape}")
    cov = channel_covariance(f @ w_reduce)
    gate = expit(cov.reshape(-1) @ w_linear + b_linear)
    return f * gate, gate


def resize_mask(m, height, width):
    """Nearest-neighbour resize of a 2-D mask to ``(height, width)``."""
    m = np.asarray(m)
    rows = (np.arange(height) * m.shape[0]) // height
    cols = (np.arange(width) * m.shape[1]) // width
    return m[np.ix_(rows, cols)]


def mask_loss(f_oa, m) -> float:
    """L2 norm of the attended features that fall on occluded (mask 0) pixels."""
    f_oa = np.asarray(f_oa, dtype=float)
    m = np.asarray(m)
    if f_oa.ndim != 3 or m.ndim != 2:
        raise DimensionMismatch(
            f"need an (h, w, c) feature map and a 2-D mask, got {f_oa.shape} and {m.shape}")
    if m.shape != f_oa.shape[:2]:
        m = resize_mask(m, *f_oa.shape[:2])
    f_mask = m[:, :, None].astype(float) * f_oa
    return float(np.linalg.norm(f_oa - f_mask))
