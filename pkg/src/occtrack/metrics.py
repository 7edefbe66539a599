"""CLEAR-style evaluation of tracker output against ground truth.

Per frame, ground-truth boxes are matched to predictions by Hungarian
assignment on IoU distance. Correspondences from the previous frame are kept
when they still overlap enough. False positives, misses and identity switches
are accumulated into MOTA; IDF1 comes from a single global matching between
ground-truth and predicted identities.
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import EmptyGroundTruth
from .geometry import BBox, iou_matrix

MT_RATIO = 0.8
ML_RATIO = 0.2


@dataclass(frozen=True)
class TrackRecord:
    """One row of a MOT file. ``frame`` is 1-based, as written on disk."""

    frame: int
    id: int
    bbox: BBox
    score: float = 1.0
    class_id: int = 0


@dataclass
class MetricsReport:
    mota: float
    idf1: float
    fp: int
    fn: int
    ids: int
    mt: int
    ml: int
    gt_total: int
    per_class: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def table(self):
        cols = ["MOTA", "IDF1", "FP", "FN", "IDs", "MT", "ML", "GT"]
        rows = [("all", self)]
        rows += [(f"class {k}", MetricsReport(**v)) for k, v in sorted(self.per_class.items())]
        lines = [f"{'':<10}" + "".join(f"{c:>9}" for c in cols)]
        for name, r in rows:
            vals = [f"{r.mota:.4f}", f"{r.idf1:.4f}", r.fp, r.fn, r.ids, r.mt, r.ml, r.gt_total]
            lines.append(f"{name:<10}" + "".join(f"{v:>9}" for v in vals))
        return "\n".join(lines) + "\n"


def _by_frame(records):
    frames = defaultdict(list)
    for r in records:
        frames[r.frame].append(r)
    return frames


def _tlwh(records):
    return np.array([[r.bbox.x_left, r.bbox.y_top, r.bbox.width, r.bbox.height]
                     for r in records], dtype=float).reshape(-1, 4)


def _frame_matches(gt_rows, pred_rows, iou_threshold, previous):
    """Match one frame. ``previous`` maps gt id -> pred id from the last frame."""
    if not gt_rows or not pred_rows:
        return []
    ious = iou_matrix(_tlwh(gt_rows), _tlwh(pred_rows))
    valid = ious >= iou_threshold
    gt_idx = {r.id: i for i, r in enumerate(gt_rows)}
    pred_idx = {r.id: j for j, r in enumerate(pred_rows)}

    pairs = []
    used_g, used_p = set(), set()
    for gid, pid in previous.items():
        i, j = gt_idx.get(gid), pred_idx.get(pid)
        if i is not None and j is not None and valid[i, j]:
            pairs.append((i, j))
            used_g.add(i)
            used_p.add(j)

    free_g = [i for i in range(len(gt_rows)) if i not in used_g]
    free_p = [j for j in range(len(pred_rows)) if j not in used_p]
    if free_g and free_p:
        sub = 1.0 - ious[np.ix_(free_g, free_p)]
        sub_valid = valid[np.ix_(free_g, free_p)]
        rows, cols = linear_sum_assignment(np.where(sub_valid, sub, 1e6))
        for r, c in zip(rows, cols):
            if sub_valid[r, c]:
                pairs.append((free_g[r], free_p[c]))
    return pairs


def _clear(gt, pred, iou_threshold):
    gt_frames, pred_frames = _by_frame(gt), _by_frame(pred)
    fp = fn = ids = 0
    previous = {}
    last_match = {}
    matched_count = defaultdict(int)
    span = defaultdict(int)
    for frame in sorted(set(gt_frames) | set(pred_frames)):
        g_rows = sorted(gt_frames.get(frame, []), key=lambda r: r.id)
        p_rows = sorted(pred_frames.get(frame, []), key=lambda r: r.id)
        for r in g_rows:
            span[r.id] += 1
        pairs = _frame_matches(g_rows, p_rows, iou_threshold, previous)
        current = {}
        for i, j in pairs:
            gid, pid = g_rows[i].id, p_rows[j].id
            if gid in last_match and last_match[gid] != pid:
                ids += 1
            last_match[gid] = pid
            current[gid] = pid
            matched_count[gid] += 1
        previous = current
        fn += len(g_rows) - len(pairs)
        fp += len(p_rows) - len(pairs)
    mt = sum(1 for g, n in span.items() if matched_count[g] >= MT_RATIO * n)
    ml = sum(1 for g, n in span.items() if matched_count[g] <= ML_RATIO * n)
    return fp, fn, ids, mt, ml


def _idf1_counts(gt, pred, iou_threshold):
    gt_ids = sorted({r.id for r in gt})
    pred_ids = sorted({r.id for r in pred})
    if not gt_ids or not pred_ids:
        return 0, len(pred), len(gt)
    gi = {g: k for k, g in enumerate(gt_ids)}
    pi = {p: k for k, p in enumerate(pred_ids)}
    overlap = np.zeros((len(gt_ids), len(pred_ids)))
    gt_frames, pred_frames = _by_frame(gt), _by_frame(pred)
    for frame, g_rows in gt_frames.items():
        p_rows = pred_frames.get(frame)
        if not p_rows:
            continue
        hit = iou_matrix(_tlwh(g_rows), _tlwh(p_rows)) >= iou_threshold
        for a, b in zip(*np.nonzero(hit)):
            overlap[gi[g_rows[a].id], pi[p_rows[b].id]] += 1
    rows, cols = linear_sum_assignment(-overlap)
    idtp = int(overlap[rows, cols].sum())
    return idtp, len(pred) - idtp, len(gt) - idtp


def idf1(gt, pred, iou_threshold=0.5) -> float:
    """Identity F1: ``2 IDTP / (2 IDTP + IDFP + IDFN)`` under the best one-to-one id mapping."""
    gt = _valid_gt(gt)
    idtp, idfp, idfn = _idf1_counts(gt, pred, iou_threshold)
    denom = 2 * idtp + idfp + idfn
    return 2 * idtp / denom if denom else 0.0


def _valid_gt(gt):
    # MOT ground truth marks rows to ignore with confidence 0
    gt = [r for r in gt if r.score != 0]
    if not gt:
        raise EmptyGroundTruth("ground truth is empty; MOTA is undefined")
    return gt


def _evaluate_single(gt, pred, iou_threshold):
    fp, fn, ids, mt, ml = _clear(gt, pred, iou_threshold)
    total = len(gt)
    return MetricsReport(
        mota=1.0 - (fn + fp + ids) / total,
        idf1=idf1(gt, pred, iou_threshold),
        fp=fp, fn=fn, ids=ids, mt=mt, ml=ml, gt_total=total,
    )


def evaluate(gt, pred, iou_threshold=0.5) -> MetricsReport:
    """CLEAR metrics plus IDF1.

    When every prediction carries a class (``class_id >= 0``) the evaluation is
    run per class, counts are summed, and IDF1 is the GT-weighted mean of the
    per-class values. Predictions with class -1 (MOT result files) are matched
    class-agnostically.
    """
    gt = _valid_gt(gt)
    pred = list(pred)
    classes = sorted({r.class_id for r in gt})
    per_class_mode = len(classes) > 1 and all(r.class_id >= 0 for r in pred)
    if not per_class_mode:
        report = _evaluate_single(gt, pred, iou_threshold)
        if len(classes) == 1 and all(r.class_id in (classes[0], -1) for r in pred):
            report.per_class = {str(classes[0]): _flat(report)}
        return report

    parts = {}
    for c in classes:
        parts[c] = _evaluate_single([r for r in gt if r.class_id == c],
                                    [r for r in pred if r.class_id == c], iou_threshold)
    # predictions of classes absent from GT are all false positives
    stray = sum(1 for r in pred if r.class_id not in parts)
    fp = sum(p.fp for p in parts.values()) + stray
    fn = sum(p.fn for p in parts.values())
    ids = sum(p.ids for p in parts.values())
    total = len(gt)
    return MetricsReport(
        mota=1.0 - (fn + fp + ids) / total,
        idf1=sum(p.idf1 * p.gt_total for p in parts.values()) / total,
        fp=fp, fn=fn, ids=ids,
        mt=sum(p.mt for p in parts.values()),
        ml=sum(p.ml for p in parts.values()),
        gt_total=total,
        per_class={str(c): _flat(p) for c, p in parts.items()},
    )


def _flat(report):
    d = asdict(report)
    d.pop("per_class")
    return d
