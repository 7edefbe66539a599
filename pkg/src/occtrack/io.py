"""Reading and writing MOTChallenge text files, embedding sidecars, configs and images.

Frame numbers are 1-based in every file. Detection lists handed to the
tracker are indexed from 0 (``detections_by_frame``).
"""
from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from .errors import InvalidBox, NonPositiveBox, ParseError
from .geometry import BBox
from .metrics import TrackRecord
from .tracker import Detection


def _fmt(x):
    x = float(x)
    if x.is_integer():
        return str(int(x))
    return f"{x:.6g}" if abs(x) >= 1e5 else f"{x:.4f}".rstrip("0").rstrip(".")


def content_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if line and not line.startswith("#"):
                yield lineno, line


def parse_mot(path):
    """Parse a MOT ground-truth (9 columns) or result/detection (10 columns) file.

    Column 7 becomes the score (confidence for ground truth). The class is
    taken from column 8; results carry -1 there.
    """
    records = []
    for lineno, line in content_lines(path):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) < 6:
            raise ParseError(f"expected at least 6 fields, got {len(parts)}", lineno)
        try:
            frame = int(float(parts[0]))
            tid = int(float(parts[1]))
            x, y, w, h = (float(v) for v in parts[2:6])
            score = float(parts[6]) if len(parts) > 6 else 1.0
            cls = int(float(parts[7])) if len(parts) > 7 else -1
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if not all(math.isfinite(v) for v in (x, y, w, h, score)):
            raise ParseError("non-finite value", lineno)
        if w <= 0 or h <= 0:
            raise NonPositiveBox(f"box size {w}x{h} is not positive", lineno)
        if frame < 1:
            raise ParseError(f"frame {frame} is not 1-based", lineno)
        try:
            box = BBox(x, y, w, h)
        except InvalidBox as exc:
            raise ParseError(str(exc), lineno) from None
        records.append(TrackRecord(frame, tid, box, score, cls))
    return records


def write_mot(records, path, gt=False):
    """Write records sorted by ``(frame, id)``.

    Ground truth gets ``frame,id,x,y,w,h,conf,class,visibility``; anything
    else the result layout ``frame,id,x,y,w,h,score,-1,-1,-1``.
    """
    rows = sorted(records, key=lambda r: (r.frame, r.id))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in rows:
            b = r.bbox
            head = [str(r.frame), str(r.id), _fmt(b.x_left), _fmt(b.y_top),
                    _fmt(b.width), _fmt(b.height), _fmt(r.score)]
            tail = [str(r.class_id), "1"] if gt else ["-1", "-1", "-1"]
            fh.write(",".join(head + tail) + "\n")


def parse_embeddings(path):
    """Read an embedding sidecar into ``{(frame, det_index): unit vector}``.

    The first non-empty line must be ``# dim=<d>``; each following row is
    ``frame,det_index,v0,...,v{d-1}``.
    """
    dim = None
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if dim is None:
                if not line.startswith("#") or "dim=" not in line:
                    raise ParseError("missing '# dim=<d>' header", lineno)
                try:
                    dim = int(line.split("dim=", 1)[1].strip())
                except ValueError:
                    raise ParseError("bad dim header", lineno) from None
                if dim <= 0:
                    raise ParseError("dim must be positive", lineno)
                continue
            if line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != dim + 2:
                raise ParseError(f"expected {dim} values, got {len(parts) - 2}", lineno)
            try:
                key = (int(parts[0]), int(parts[1]))
                vec = np.array([float(v) for v in parts[2:]])
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            norm = np.linalg.norm(vec)
            if not np.isfinite(norm) or norm == 0:
                raise ParseError("embedding has zero or non-finite norm", lineno)
            if key in out:
                raise ParseError(f"duplicate embedding for frame {key[0]}, det {key[1]}", lineno)
            out[key] = vec / norm
    if dim is None:
        return {}
    return out


def write_embeddings(embeddings, path):
    """Write ``{(frame, det_index): vector}`` in the sidecar format."""
    keys = sorted(embeddings)
    dim = len(next(iter(embeddings.values()))) if keys else 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# dim={dim}\n")
        for frame, idx in keys:
            vals = ",".join(f"{v:.8g}" for v in embeddings[(frame, idx)])
            fh.write(f"{frame},{idx},{vals}\n")


def detections_by_frame(records, embeddings=None, num_frames=None):
    """Group detection rows into per-frame ``Detection`` lists (index 0 = file frame 1).

    Rows keep their file order within a frame; that order is the ``det_index``
    used by the embedding sidecar. Scores are clipped to ``[0, 1]``.
    """
    grouped = defaultdict(list)
    for r in records:
        grouped[r.frame].append(r)
    last = max(grouped, default=0)
    n = max(last, num_frames or 0)
    frames = []
    used = set()
    for f in range(1, n + 1):
        dets = []
        for k, r in enumerate(grouped.get(f, [])):
            emb = None
            if embeddings is not None:
                emb = embeddings.get((f, k))
                if emb is None:
                    raise ParseError(f"no embedding for frame {f}, detection {k}")
                used.add((f, k))
            dets.append(Detection(r.bbox, min(max(r.score, 0.0), 1.0), max(r.class_id, 0), emb))
        frames.append(dets)
    if embeddings is not None and len(used) != len(embeddings):
        extra = sorted(set(embeddings) - used)[0]
        raise ParseError(f"embedding for frame {extra[0]}, detection {extra[1]} has no detection row")
    return frames


def detection_records(frames):
    """Inverse of ``detections_by_frame``: records (id -1) plus the embedding map."""
    records, embeddings = [], {}
    for f, dets in enumerate(frames, 1):
        for k, d in enumerate(dets):
            records.append(TrackRecord(f, -1, d.bbox, d.score, d.class_id))
            if d.embedding is not None:
                embeddings[(f, k)] = d.embedding
    return records, embeddings


def write_detections(frames, path):
    """Detection rows in file order, ``frame,-1,x,y,w,h,score,-1,-1,-1``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for f, dets in enumerate(frames, 1):
            for d in dets:
                b = d.bbox
                fh.write(",".join([str(f), "-1", _fmt(b.x_left), _fmt(b.y_top), _fmt(b.width),
                                   _fmt(b.height), _fmt(d.score), "-1", "-1", "-1"]) + "\n")


def read_keyvalue(path):
    """Flat ``key=value`` config; ``#`` starts a comment."""
    out = {}
    for lineno, line in content_lines(path):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got {line!r}", lineno)
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def parse_boxes(path):
    """Boxes for augmentation: either ``x,y,w,h`` rows or MOT rows (all frames)."""
    boxes = []
    for lineno, line in content_lines(path):
        parts = line.split(",")
        try:
            vals = [float(v) for v in (parts if len(parts) == 4 else parts[2:6])]
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if len(vals) != 4:
            raise ParseError("expected x,y,w,h or a MOT row", lineno)
        if vals[2] <= 0 or vals[3] <= 0:
            raise NonPositiveBox("box size is not positive", lineno)
        boxes.append(BBox(*vals))
    return boxes


def read_image(path):
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def write_image(img, path):
    from PIL import Image

    Image.fromarray(np.asarray(img, dtype=np.uint8), mode="RGB").save(path)


def write_mask(mask, path):
    """Single-channel PNG, 0 where occluded and 255 where visible."""
    from PIL import Image

    Image.fromarray((np.asarray(mask) > 0).astype(np.uint8) * 255, mode="L").save(path)


def ensure_dir(path):
    Path(path).mkdir(parents=True, exist_ok=True)
    return Path(path)
