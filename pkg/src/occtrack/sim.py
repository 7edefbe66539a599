"""Seeded synthetic scenarios: agents moving in a box arena, seen through occluders.

Agents move at constant velocity and bounce off the arena walls. Each one
carries a fixed appearance prototype. Detections are noisy copies of the
ground truth; behind an occluder they are either dropped or come out with a
low score and an appearance blended with the occluder's.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .errors import InvalidConfig
from .geometry import BBox, iou_matrix
from .metrics import TrackRecord
from .tracker import Detection

OCCLUSION_IOU = 0.3
OCCLUDER_BLEND = 0.5
MAX_PROTOTYPE_COS = 0.5


@dataclass
class ScenarioConfig:
    num_agents: int = 10
    num_frames: int = 300
    width: float = 640.0
    height: float = 360.0
    sigma_box: float = 1.0
    drop_prob: float = 0.5
    occluded_score: float = 0.15
    embedding_dim: int = 64
    sigma_e: float = 0.05
    occluders: list = field(default_factory=list)
    seed: int = 0
    min_speed: float = 1.0
    max_speed: float = 4.0
    min_box_width: float = 45.0
    max_box_width: float = 60.0
    box_aspect: float = 2.0  # height / width
    corrupt_embeddings: bool = True

    def validate(self):
        if self.num_agents <= 0 or self.num_frames <= 0 or self.embedding_dim <= 0:
            raise InvalidConfig("num_agents, num_frames and embedding_dim must be positive")
        if self.width <= 0 or self.height <= 0:
            raise InvalidConfig("arena dimensions must be positive")
        for name in ("drop_prob", "occluded_score"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidConfig(f"{name} must lie in [0, 1]")
        if self.sigma_box < 0 or self.sigma_e < 0:
            raise InvalidConfig("noise levels must be non-negative")
        if not 0 <= self.min_speed <= self.max_speed:
            raise InvalidConfig("need 0 <= min_speed <= max_speed")
        if not 0 < self.min_box_width <= self.max_box_width:
            raise InvalidConfig("need 0 < min_box_width <= max_box_width")
        if self.box_aspect <= 0:
            raise InvalidConfig("box_aspect must be positive")
        if self.max_box_width >= self.width or self.max_box_width * self.box_aspect >= self.height:
            raise InvalidConfig("agent boxes do not fit in the arena")
        for o in self.occluders:
            if not isinstance(o, BBox):
                raise InvalidConfig(f"occluder {o!r} is not a BBox")


def random_occluders(count, width, height, seed, size=(80.0, 150.0)):
    """``count`` occluders of the given ``(w, h)`` placed uniformly inside the arena."""
    rng = np.random.default_rng([seed, 7])
    w, h = size
    return [BBox(float(rng.uniform(0, width - w)), float(rng.uniform(0, height - h)), w, h)
            for _ in range(count)]


def benchmark_config(seed, **overrides):
    """The occlusion benchmark scenario: 10 agents, 300 frames, 3 occluders."""
    cfg = ScenarioConfig(seed=seed, **overrides)
    if not cfg.occluders:
        cfg.occluders = random_occluders(3, cfg.width, cfg.height, seed)
    return cfg


def _unit_rows(x):
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def _prototypes(rng, count, dim):
    """``count + 1`` unit vectors with pairwise cosine below the limit; the last is the occluder's."""
    protos = _unit_rows(rng.standard_normal((count + 1, dim)))
    for k in range(1, count + 1):
        for _ in range(10000):
            if np.all(protos[:k] @ protos[k] < MAX_PROTOTYPE_COS):
                break
            protos[k] = _unit_rows(rng.standard_normal(dim))
        else:
            raise InvalidConfig("cannot draw well-separated prototypes; increase embedding_dim")
    return protos[:count], protos[count]


def _paths(cfg, rng):
    """Ground-truth ``(frames, agents, 4)`` tlwh array."""
    n = cfg.num_agents
    w = rng.uniform(cfg.min_box_width, cfg.max_box_width, n)
    h = w * cfg.box_aspect
    x = rng.uniform(0, cfg.width - w)
    y = rng.uniform(0, cfg.height - h)
    angle = rng.uniform(0, 2 * np.pi, n)
    speed = rng.uniform(cfg.min_speed, cfg.max_speed, n)
    vx, vy = speed * np.cos(angle), speed * np.sin(angle)
    out = np.empty((cfg.num_frames, n, 4))
    for f in range(cfg.num_frames):
        out[f] = np.stack([x, y, w, h], axis=1)
        x, vx = _reflect(x + vx, vx, cfg.width - w)
        y, vy = _reflect(y + vy, vy, cfg.height - h)
    return out


def _reflect(pos, vel, upper):
    pos, vel = pos.copy(), vel.copy()
    low = pos < 0
    pos[low] = -pos[low]
    vel[low] = -vel[low]
    high = pos > upper
    pos[high] = 2 * upper[high] - pos[high]
    vel[high] = -vel[high]
    return pos, vel


def generate(cfg: ScenarioConfig, return_sources=False):
    """Simulate a scenario.

    Returns ``(gt, detections)``: ground-truth records (1-based frames, ids
    ``1..num_agents``) and one list of ``Detection`` per frame (0-based). With
    ``return_sources=True`` a third value gives, per frame, the agent id behind
    each detection.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    protos, occ_proto = _prototypes(rng, cfg.num_agents, cfg.embedding_dim)
    paths = _paths(cfg, rng)
    occ = np.array([[o.x_left, o.y_top, o.width, o.height] for o in cfg.occluders]).reshape(-1, 4)

    gt, frames, sources = [], [], []
    for f in range(cfg.num_frames):
        boxes = paths[f]
        occluded = (iou_matrix(boxes, occ).max(axis=1) > OCCLUSION_IOU
                    if len(occ) else np.zeros(len(boxes), bool))
        box_noise = rng.normal(0.0, 1.0, (len(boxes), 4)) * cfg.sigma_box
        emb_noise = rng.normal(0.0, 1.0, (len(boxes), cfg.embedding_dim)) * cfg.sigma_e
        drops = rng.uniform(size=len(boxes))
        dets, src = [], []
        for a in range(cfg.num_agents):
            gt.append(TrackRecord(f + 1, a + 1, BBox(*map(float, boxes[a])), 1.0, 0))
            if occluded[a] and drops[a] < cfg.drop_prob:
                continue
            x, y, w, h = boxes[a] + box_noise[a]
            emb = _unit_rows(protos[a] + emb_noise[a])
            score = 1.0
            if occluded[a]:
                score = cfg.occluded_score
                if cfg.corrupt_embeddings:
                    emb = _unit_rows((1 - OCCLUDER_BLEND) * emb + OCCLUDER_BLEND * occ_proto)
            det_box = BBox(float(x), float(y), float(max(w, 1.0)), float(max(h, 1.0)))
            dets.append(Detection(det_box, score, 0, emb))
            src.append(a + 1)
        frames.append(dets)
        sources.append(src)
    if return_sources:
        return gt, frames, sources
    return gt, frames


def config_from_mapping(values):
    """``ScenarioConfig`` from ``key=value`` strings.

    ``occluders`` is a ``;``-separated list of ``x,y,w,h`` boxes;
    ``num_occluders=k`` instead places ``k`` random occluders from the seed.
    """
    values = dict(values)
    count = values.pop("num_occluders", None)
    occ_text = values.pop("occluders", None)
    kinds = {f.name: f.type for f in fields(ScenarioConfig)}
    kw = {}
    for key, raw in values.items():
        if key not in kinds:
            raise InvalidConfig(f"unknown scenario parameter {key!r}")
        try:
            if kinds[key] == "int":
                kw[key] = int(raw)
            elif kinds[key] == "bool":
                kw[key] = str(raw).strip().lower() in ("1", "true", "yes", "on")
            else:
                kw[key] = float(raw)
        except ValueError:
            raise InvalidConfig(f"bad value for {key}: {raw!r}") from None
    cfg = ScenarioConfig(**kw)
    if occ_text:
        try:
            cfg.occluders = [BBox(*(float(v) for v in chunk.split(",")))
                             for chunk in occ_text.split(";") if chunk.strip()]
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(f"bad occluders: {exc}") from None
    elif count is not None:
        try:
            count = int(count)
        except ValueError:
            raise InvalidConfig(f"bad num_occluders: {count!r}") from None
        cfg.occluders = random_occluders(count, cfg.width, cfg.height, cfg.seed)
    cfg.validate()
    return cfg
