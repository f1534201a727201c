"""Per-frame processing: lift detections to 3D and fold them into the store."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple, Union

import numpy as np

from .geometry import BoundingBox2D, CameraIntrinsics, CameraPose, MetricExtent, back_project, reconstruct_bboxes
from .scoring import ClassObservation, DepthRange, ScoreWeights
from .store import ObjectRecord, ObjectStore, OutcomeKind, UpdateOutcome


@dataclass(frozen=True, slots=True)
class Detection:
    bbox: BoundingBox2D
    class_obs: ClassObservation
    mean_depth: float


@dataclass(frozen=True, slots=True)
class RejectedDetection:
    """Placeholder for a detection that could not be parsed into a valid one."""

    reason: str


@dataclass(frozen=True)
class FrameInput:
    frame_index: int
    pose: CameraPose
    detections: Sequence[Union[Detection, RejectedDetection]] = ()


@dataclass(frozen=True)
class FrameResult:
    """Outcome of one frame.

    Reconstructed boxes of the stored objects visible after the update are
    kept as arrays (``projected_ids``, ``projected_boxes``);
    :attr:`projected_records` pairs them up on demand.
    """

    frame_index: int
    outcomes: List[UpdateOutcome]
    projected_ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.intp))
    projected_boxes: np.ndarray = field(default_factory=lambda: np.empty((0, 4)))
    elapsed_us: float = 0.0

    @property
    def projected_records(self) -> List[Tuple[int, BoundingBox2D]]:
        return [(int(i), BoundingBox2D(*b)) for i, b in zip(self.projected_ids, self.projected_boxes.tolist())]


def patch_mean_depth(depth_patch) -> float:
    """Mean of the valid (finite, positive) samples of a depth patch."""
    d = np.asarray(depth_patch, dtype=float).ravel()
    d = d[np.isfinite(d) & (d > 0)]
    if d.size == 0:
        raise ValueError("depth_patch: no valid depth samples")
    return float(d.mean())


def lift_detection(det: Detection, pose: CameraPose, intr: CameraIntrinsics,
                   depth_range: DepthRange = DepthRange(), weights: ScoreWeights = ScoreWeights(),
                   frame_index: int = 0) -> ObjectRecord:
    """Turn a 2D detection into an un-stored :class:`ObjectRecord`.

    The object sits at the back-projection of the box center at the mean
    depth; its metric size is the box size scaled by depth over focal length.
    """
    depth = det.mean_depth
    if not (np.isfinite(depth) and depth > 0):
        raise ValueError(f"mean_depth: must be finite and > 0, got {depth!r}")
    if not det.bbox.within(intr.width, intr.height):
        raise ValueError(f"bbox: {det.bbox.as_tuple()} exceeds the {intr.width}x{intr.height} image")
    if det.bbox.area <= 0.0:
        raise ValueError("bbox: zero area")
    position = back_project(det.bbox.center, depth, pose, intr)
    extent = MetricExtent.from_bbox(det.bbox, depth, intr)
    return ObjectRecord.create(position, extent, det.class_obs, depth, frame_index, depth_range, weights)


def project_store(store: ObjectStore, pose: CameraPose, intr: CameraIntrinsics) -> Tuple[np.ndarray, np.ndarray]:
    """Ids and (n, 4) reconstructed boxes of the stored objects visible from ``pose``."""
    if len(store) == 0:
        return np.empty(0, dtype=np.intp), np.empty((0, 4))
    positions, extents = store.arrays()
    boxes, visible = reconstruct_bboxes(positions, extents, pose, intr)
    ids = np.flatnonzero(visible)
    return ids, boxes[ids]


def process_frame(store: ObjectStore, frame: FrameInput, intr: CameraIntrinsics,
                  project: bool = True) -> FrameResult:
    """Apply every detection of ``frame`` to ``store`` in list order.

    Invalid detections are reported as ``SKIPPED`` outcomes; they never stop
    the frame.
    """
    t0 = time.perf_counter_ns()
    outcomes: List = []
    lifted, slots = [], []
    # lifting does not touch the store, so it can run ahead of the in-order updates
    for det in frame.detections:
        if isinstance(det, RejectedDetection):
            outcomes.append(UpdateOutcome(OutcomeKind.SKIPPED, reason=det.reason))
            continue
        try:
            lifted.append(lift_detection(det, frame.pose, intr, store.depth_range, store.weights, frame.frame_index))
        except ValueError as exc:
            outcomes.append(UpdateOutcome(OutcomeKind.SKIPPED, reason=str(exc)))
            continue
        slots.append(len(outcomes))
        outcomes.append(None)
    for slot, outcome in zip(slots, store.update_many(lifted, frame.pose, intr)):
        outcomes[slot] = outcome
    if project:
        ids, boxes = project_store(store, frame.pose, intr)
    else:
        ids, boxes = np.empty(0, dtype=np.intp), np.empty((0, 4))
    elapsed = (time.perf_counter_ns() - t0) / 1000.0
    return FrameResult(frame.frame_index, outcomes, ids, boxes, elapsed)


def process_frames(store: ObjectStore, frames, intr: CameraIntrinsics, project: bool = True) -> List[FrameResult]:
    results = []
    last = None
    for frame in frames:
        if last is not None and frame.frame_index <= last:
            raise ValueError(f"frame_index: {frame.frame_index} does not follow {last}")
        last = frame.frame_index
        results.append(process_frame(store, frame, intr, project))
    return results
