"""Maintain object locations and classes across camera views using objectness scores."""

from .estimator import ObjectMapper, ObjectnessScorer
from .geometry import (BoundingBox2D, CameraIntrinsics, CameraPose, MetricExtent, back_project, compute_iou,
                       project_point, reconstruct_bbox, reconstruct_bboxes)
from .pipeline import Detection, FrameInput, FrameResult, RejectedDetection, lift_detection, patch_mean_depth, \
    process_frame, process_frames
from .scoring import ClassObservation, DepthRange, ScoreWeights, depth_score, objectness_score, objectness_scores
from .store import ObjectRecord, ObjectStore, OutcomeKind, UpdateOutcome

__version__ = "0.1.0"

__all__ = [
    "BoundingBox2D", "CameraIntrinsics", "CameraPose", "ClassObservation", "DepthRange", "Detection",
    "FrameInput", "FrameResult", "MetricExtent", "ObjectMapper", "ObjectRecord", "ObjectStore",
    "ObjectnessScorer", "OutcomeKind", "RejectedDetection", "ScoreWeights", "UpdateOutcome", "back_project",
    "compute_iou", "depth_score", "lift_detection", "objectness_score", "objectness_scores",
    "patch_mean_depth", "process_frame", "process_frames", "project_point", "reconstruct_bbox",
    "reconstruct_bboxes",
]
