"""Two-stage tracking-by-detection.

Each frame, detections are split by score into a high and a low pool. High
detections are matched to tracks first by appearance and then by box overlap;
tracks still unmatched try the low pool by box overlap only. Leftover
confident detections start new tracks.
"""
from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from . import motion
from .assignment import embedding_cost_matrix, hungarian
from .errors import InvalidConfig, NonMonotonicFrame
from .geometry import BBox, iou_matrix
from .metrics import TrackRecord
from .transport import DEFAULT_ALPHA, DEFAULT_EPSILON, calibrate_embeddings


class TrackStatus(enum.Enum):
    TENTATIVE = "tentative"
    ACTIVE = "active"
    LOST = "lost"
    REMOVED = "removed"


@dataclass
class Detection:
    bbox: BBox
    score: float
    class_id: int = 0
    embedding: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score {self.score} outside [0, 1]")
        if self.embedding is not None:
            e = np.asarray(self.embedding, dtype=float)
            n = np.linalg.norm(e)
            if abs(n - 1.0) > 1e-6:
                raise ValueError(f"detection embedding must be unit norm, got {n}")
            self.embedding = e


@dataclass
class Track:
    track_id: int
    status: TrackStatus
    kstate: motion.KalmanState
    embedding: Optional[np.ndarray]
    class_id: int
    frames_since_update: int = 0
    hits: int = 1
    last_frame: int = 0
    confirmed: bool = False
    # (frame, tlwh, score) for every matched observation
    history: list = field(default_factory=list, repr=False)

    @property
    def bbox(self):
        return motion.state_to_bbox(self.kstate)


@dataclass
class TrackerParams:
    s_init: float = 0.35
    s_high: float = 0.25
    s_low: float = 0.05
    gate_embedding: float = 0.4
    gate_iou_high: float = 0.8
    gate_iou_low: float = 0.5
    max_age: int = 30
    ema_momentum: float = 0.9
    use_embeddings: bool = True
    use_calibration: bool = True
    epsilon: float = DEFAULT_EPSILON
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        self.validate()

    def validate(self):
        # s_low == s_high is allowed and switches the low-score stage off
        if not 0.0 <= self.s_low <= self.s_high <= 1.0:
            raise InvalidConfig(f"need 0 <= s_low <= s_high <= 1, got {self.s_low}, {self.s_high}")
        if self.s_init < self.s_high:
            raise InvalidConfig(f"s_init ({self.s_init}) must be >= s_high ({self.s_high})")
        for name in ("gate_embedding", "gate_iou_high", "gate_iou_low", "epsilon"):
            if getattr(self, name) <= 0:
                raise InvalidConfig(f"{name} must be positive")
        if not 0.0 <= self.ema_momentum <= 1.0 or not 0.0 <= self.alpha <= 1.0:
            raise InvalidConfig("ema_momentum and alpha must lie in [0, 1]")
        if self.max_age < 0:
            raise InvalidConfig("max_age must be non-negative")

    @classmethod
    def from_mapping(cls, values):
        """Build params from string or typed values keyed by field name."""
        kinds = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, raw in values.items():
            if key not in kinds:
                raise InvalidConfig(f"unknown tracker parameter {key!r}")
            kw[key] = _coerce(key, kinds[key], raw)
        return cls(**kw)


def _coerce(key, kind, raw):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        return float(raw)
    except ValueError:
        raise InvalidConfig(f"bad value for {key}: {raw!r}") from None


@dataclass
class StepInfo:
    """What happened to each detection and track during the last step."""

    matched: dict = field(default_factory=dict)  # det index -> (track id, stage)
    new_tracks: dict = field(default_factory=dict)  # det index -> track id
    discarded: list = field(default_factory=list)  # det indices
    high: list = field(default_factory=list)
    low: list = field(default_factory=list)


@dataclass
class TrackerState:
    tracks: list = field(default_factory=list)
    next_id: int = 1
    frame: Optional[int] = None
    last_step: StepInfo = field(default_factory=StepInfo)
    # removed tracks that were confirmed, kept for flush
    retired: list = field(default_factory=list)

    @property
    def live_tracks(self):
        return [t for t in self.tracks if t.status is not TrackStatus.REMOVED]


def partition_detections(dets, p: TrackerParams):
    high = [d for d in dets if d.score >= p.s_high]
    low = [d for d in dets if p.s_low <= d.score < p.s_high]
    return high, low


def _match(costs, gate, rows, cols, stage, matches):
    """Run one gated assignment; returns the leftover rows and columns."""
    res = hungarian(costs, gate)
    for r, c in res.matches:
        matches.append((rows[r], cols[c], stage))
    return [rows[r] for r in res.unmatched_rows], [cols[c] for c in res.unmatched_cols]


def _associate(tracks, track_tlwh, dets, det_tlwh, high, low, p):
    """Match one class. Returns ``(track_idx, det_idx, stage)`` triples."""
    matches = []
    pool = [i for i, t in enumerate(tracks)
            if t.status in (TrackStatus.ACTIVE, TrackStatus.LOST)]
    tentative = [i for i, t in enumerate(tracks) if t.status is TrackStatus.TENTATIVE]
    was_active = {i for i, t in enumerate(tracks) if t.status is TrackStatus.ACTIVE}

    remaining_high = list(high)
    if p.use_embeddings:
        rows = [i for i in pool if tracks[i].embedding is not None]
        cols = [j for j in high if dets[j].embedding is not None]
        if rows and cols:
            t_emb = np.stack([tracks[i].embedding for i in rows])
            d_emb = np.stack([dets[j].embedding for j in cols])
            costs = embedding_cost_matrix(t_emb, d_emb)
            if p.use_calibration:
                # balanced transport forces leftover tracks and detections onto
                # each other, so calibrated distances only re-rank pairs the raw
                # distance already admits
                t_cal, d_cal = calibrate_embeddings(t_emb, d_emb, p.epsilon, p.alpha)
                costs = np.where(costs <= p.gate_embedding,
                                 embedding_cost_matrix(t_cal, d_cal), costs)
            left_rows, left_cols = _match(costs, p.gate_embedding, rows, cols, "embedding",
                                          matches)
            taken = set(rows) - set(left_rows)
            pool = [i for i in pool if i not in taken]
            used = set(cols) - set(left_cols)
            remaining_high = [j for j in high if j not in used]

    rows = pool + tentative
    leftover = rows
    if rows and remaining_high:
        costs = 1.0 - iou_matrix(track_tlwh[rows], det_tlwh[remaining_high])
        leftover, _ = _match(costs, p.gate_iou_high, rows, remaining_high, "iou_high",
                             matches)

    rows = [i for i in leftover if i in was_active]
    if rows and low:
        costs = 1.0 - iou_matrix(track_tlwh[rows], det_tlwh[low])
        _match(costs, p.gate_iou_low, rows, low, "iou_low", matches)
    return matches


def _blend_embeddings(track_embs, det_embs, momentum):
    """Exponential moving average of track embeddings, renormalized.

    A missing detection embedding keeps the track's; a track without one adopts
    the detection's.
    """
    out = list(track_embs)
    both = [k for k, (t, d) in enumerate(zip(track_embs, det_embs))
            if t is not None and d is not None]
    for k, (t, d) in enumerate(zip(track_embs, det_embs)):
        if t is None and d is not None:
            out[k] = d.copy()
    if both:
        mixed = (momentum * np.stack([track_embs[k] for k in both])
                 + (1.0 - momentum) * np.stack([det_embs[k] for k in both]))
        mixed /= np.linalg.norm(mixed, axis=1, keepdims=True)
        for row, k in enumerate(both):
            out[k] = mixed[row]
    return out


def step(state: TrackerState, dets, frame: int, p: TrackerParams) -> TrackerState:
    """Advance ``state`` by one frame (0-based index) and return it."""
    if state.frame is not None and frame <= state.frame:
        raise NonMonotonicFrame(f"frame {frame} does not follow {state.frame}")
    state.frame = frame
    state.retired.extend(t for t in state.tracks
                         if t.status is TrackStatus.REMOVED and t.confirmed)
    state.tracks = state.live_tracks
    tracks = state.tracks
    info = StepInfo()
    state.last_step = info

    if tracks:
        means = np.stack([t.kstate.mean for t in tracks])
        covs = np.stack([t.kstate.covariance for t in tracks])
        means, covs = motion.multi_predict(means, covs)
        for t, m, c in zip(tracks, means, covs):
            t.kstate = motion.KalmanState(m, c)
        track_tlwh = motion.state_tlwh(means)
    else:
        track_tlwh = np.zeros((0, 4))

    det_tlwh = np.array([[d.bbox.x_left, d.bbox.y_top, d.bbox.width, d.bbox.height]
                         for d in dets], dtype=float).reshape(-1, 4)
    info.high = [j for j, d in enumerate(dets) if d.score >= p.s_high]
    info.low = [j for j, d in enumerate(dets) if p.s_low <= d.score < p.s_high]

    by_class_t = defaultdict(list)
    for i, t in enumerate(tracks):
        by_class_t[t.class_id].append(i)
    by_class_d = defaultdict(list)
    for j, d in enumerate(dets):
        by_class_d[d.class_id].append(j)

    matches = []
    high_set, low_set = set(info.high), set(info.low)
    for cls in sorted(set(by_class_t) | set(by_class_d)):
        t_idx, d_idx = by_class_t.get(cls, []), by_class_d.get(cls, [])
        if not t_idx or not d_idx:
            continue
        local_t = [tracks[i] for i in t_idx]
        local_d = [dets[j] for j in d_idx]
        high = [k for k, j in enumerate(d_idx) if j in high_set]
        low = [k for k, j in enumerate(d_idx) if j in low_set]
        for ti, dj, stage in _associate(local_t, track_tlwh[t_idx], local_d, det_tlwh[d_idx],
                                        high, low, p):
            matches.append((t_idx[ti], d_idx[dj], stage))

    matched_tracks = set()
    if matches:
        ti = [m[0] for m in matches]
        dj = [m[1] for m in matches]
        x, y, w, h = det_tlwh[dj].T
        z = np.stack([x + w / 2, y + h / 2, w / h, h], axis=1)
        means = np.stack([tracks[i].kstate.mean for i in ti])
        covs = np.stack([tracks[i].kstate.covariance for i in ti])
        means, covs = motion.multi_update(means, covs, z)
        boxes = motion.state_tlwh(means)
        blended = _blend_embeddings([tracks[i].embedding for i in ti],
                                    [dets[j].embedding for j in dj], p.ema_momentum)
        for k, (i, j, stage) in enumerate(matches):
            t, d = tracks[i], dets[j]
            t.kstate = motion.KalmanState(means[k], covs[k])
            t.embedding = blended[k]
            t.hits += 1
            t.frames_since_update = 0
            t.last_frame = frame
            if t.status is TrackStatus.TENTATIVE:
                if t.hits >= 2:
                    t.status = TrackStatus.ACTIVE
                    t.confirmed = True
            else:
                t.status = TrackStatus.ACTIVE
            t.history.append((frame, boxes[k], d.score))
            matched_tracks.add(i)
            info.matched[j] = (t.track_id, stage)

    for i, t in enumerate(tracks):
        if i in matched_tracks:
            continue
        t.frames_since_update += 1
        if t.status is TrackStatus.TENTATIVE:
            t.status = TrackStatus.REMOVED
        elif t.status is TrackStatus.ACTIVE:
            t.status = TrackStatus.LOST
        if t.status is TrackStatus.LOST and t.frames_since_update > p.max_age:
            t.status = TrackStatus.REMOVED

    for j in info.high:
        if j in info.matched:
            continue
        d = dets[j]
        if d.score < p.s_init:
            info.discarded.append(j)
            continue
        t = Track(
            track_id=state.next_id,
            status=TrackStatus.TENTATIVE,
            kstate=motion.kf_initiate(d.bbox),
            embedding=None if d.embedding is None else d.embedding.copy(),
            class_id=d.class_id,
            last_frame=frame,
        )
        t.history.append((frame, d.bbox.as_tlwh(), d.score))
        state.next_id += 1
        tracks.append(t)
        info.new_tracks[j] = t.track_id
    return state


def flush(state: TrackerState):
    """Rows ``(frame, id, bbox, score)`` for every observation of a confirmed track.

    Frames are converted to the 1-based numbering of MOT files. Observations
    made while a track was still tentative are included once it confirms.
    """
    rows = []
    for t in state.retired + state.tracks:
        if not t.confirmed:
            continue
        for frame, tlwh, score in t.history:
            rows.append(TrackRecord(frame + 1, t.track_id, BBox(*map(float, tlwh)),
                                    float(score), t.class_id))
    rows.sort(key=lambda r: (r.frame, r.id))
    return rows


class Tracker:
    """Convenience wrapper holding the state of one sequence."""

    def __init__(self, params: Optional[TrackerParams] = None):
        self.params = params or TrackerParams()
        self.state = TrackerState()

    def step(self, dets, frame=None):
        if frame is None:
            frame = 0 if self.state.frame is None else self.state.frame + 1
        step(self.state, dets, frame, self.params)
        return [t for t in self.state.tracks if t.status is TrackStatus.ACTIVE]

    def run(self, frames):
        """Track a whole sequence given per-frame detection lists; returns the records."""
        for k, dets in enumerate(frames):
            self.step(dets, k)
        return flush(self.state)

    def flush(self):
        return flush(self.state)
