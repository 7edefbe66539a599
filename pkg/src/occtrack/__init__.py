"""Occlusion-aware multi-object tracking: association, transport calibration, evaluation."""

from .geometry import BBox, ciou_loss, iou, iou_distance
from .metrics import MetricsReport, TrackRecord, evaluate, idf1
from .tracker import Detection, Track, Tracker, TrackerParams, TrackerState, TrackStatus, flush, step

__all__ = [
    "BBox", "ciou_loss", "iou", "iou_distance",
    "MetricsReport", "TrackRecord", "evaluate", "idf1",
    "Detection", "Track", "Tracker", "TrackerParams", "TrackerState", "TrackStatus",
    "flush", "step",
]
