"""Synthetic scenes, approach trajectories and a noisy stand-in detector.

The detector reproduces the scale-change failure: class predictions are
reliable in a middle distance band and mostly wrong when the camera is
very close to the object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import BoundingBox2D, CameraIntrinsics, CameraPose, MetricExtent, reconstruct_bbox
from .pipeline import Detection, FrameInput, FrameResult, process_frame
from .scoring import ClassObservation
from .store import ObjectRecord, ObjectStore

DEFAULT_INTRINSICS = CameraIntrinsics(fx=525.0, fy=525.0, cx=320.0, cy=240.0, width=640, height=480)

CLASSES = ("chair", "table", "sofa", "bed", "plant", "tv", "refrigerator", "toilet")

#: Wrong labels a detector tends to emit for each true class.
DEFAULT_CONFUSION: Dict[str, Tuple[str, ...]] = {
    "chair": ("traffic light", "tv", "umbrella"),
    "table": ("bench", "bed", "chair"),
    "sofa": ("bed", "chair", "suitcase"),
    "bed": ("sofa", "bench", "table"),
    "plant": ("vase", "umbrella", "broccoli"),
    "tv": ("laptop", "microwave", "refrigerator"),
    "refrigerator": ("oven", "tv", "door"),
    "toilet": ("sink", "chair", "vase"),
}
_FALLBACK_CONFUSION = ("person", "umbrella", "traffic light")

_EXTENTS = {
    "chair": (0.5, 0.9), "table": (1.2, 0.75), "sofa": (1.8, 0.85), "bed": (1.6, 0.6),
    "plant": (0.4, 0.8), "tv": (1.0, 0.6), "refrigerator": (0.7, 1.8), "toilet": (0.4, 0.8),
}

_BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class SceneObject:
    id: int
    true_class: str
    position: Tuple[float, float, float]
    extent: MetricExtent


@dataclass(frozen=True)
class SceneSpec:
    objects: Tuple[SceneObject, ...]
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS


def generate_scene(n_objects: int = 1, seed: int = 0, *, intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
                   first_position=(0.0, 0.0, 0.45), area: Optional[float] = None,
                   max_attempts: int = 10_000) -> SceneSpec:
    """Deterministic scene of ``n_objects``; the first is always a chair at ``first_position``.

    Objects rest on the floor (center height = half their height) inside a
    square of side ``area`` centered on the first one, pairwise separated by
    more than the largest extent in the scene.
    """
    if n_objects < 1:
        raise ValueError(f"n_objects: must be >= 1, got {n_objects!r}")
    rng = np.random.default_rng(seed)
    classes = ["chair"] + [CLASSES[i] for i in rng.integers(0, len(CLASSES), n_objects - 1)]
    extents = [MetricExtent(*_EXTENTS[c]) for c in classes]
    sep = max(max(e.width_m, e.height_m) for e in extents)
    if area is None:
        area = 2.5 * sep * math.sqrt(n_objects)
    # disc packing is infeasible above ~0.9 density; bail out early
    if n_objects * math.pi * (sep / 2) ** 2 > 0.9 * area ** 2:
        raise ValueError(f"n_objects: {n_objects} objects with separation {sep} m do not fit in {area} m square")
    first = np.asarray(first_position, dtype=float)
    placed = [first[:2]]
    attempts = 0
    while len(placed) < n_objects:
        attempts += 1
        if attempts > max_attempts:
            raise ValueError(f"n_objects: could not place {n_objects} separated objects in {area} m square")
        cand = first[:2] + rng.uniform(-area / 2, area / 2, size=2)
        if all(np.hypot(*(cand - p)) > sep for p in placed):
            placed.append(cand)
    objects = [SceneObject(0, "chair", tuple(float(c) for c in first), extents[0])]
    for i in range(1, n_objects):
        xy = placed[i]
        objects.append(SceneObject(i, classes[i], (float(xy[0]), float(xy[1]), extents[i].height_m / 2), extents[i]))
    return SceneSpec(tuple(objects), intrinsics)


@dataclass(frozen=True)
class Trajectory:
    poses: Tuple[CameraPose, ...]
    frame_indices: Tuple[int, ...]
    distances: Tuple[float, ...]
    angle_deg: float = 0.0
    start_distance: float = 3.0
    end_distance: float = 0.3
    step: float = 0.1


def approach_trajectory(target, angle_deg: float = 0.0, start_distance: float = 3.0, end_distance: float = 0.3,
                        step: float = 0.1, camera_height: Optional[float] = None) -> Trajectory:
    """Straight-line approach toward ``target`` from azimuth ``angle_deg``.

    At angle 0 the camera travels along +x; the camera always faces the target.
    """
    if not start_distance > end_distance > 0:
        raise ValueError("start_distance: must exceed end_distance, which must be > 0")
    if step <= 0:
        raise ValueError(f"step: must be > 0, got {step!r}")
    target = np.asarray(target, dtype=float)
    height = target[2] if camera_height is None else float(camera_height)
    n = int(round((start_distance - end_distance) / step)) + 1
    dists = np.linspace(start_distance, end_distance, n)
    a = math.radians(angle_deg)
    direction = np.array([math.cos(a), math.sin(a), 0.0])
    look_at = np.array([target[0], target[1], height])
    poses = []
    for d in dists:
        eye = look_at - d * direction
        poses.append(CameraPose.look_at(eye, eye + direction))
    return Trajectory(tuple(poses), tuple(range(n)), tuple(float(d) for d in dists),
                      float(angle_deg), float(start_distance), float(end_distance), float(step))


@dataclass(frozen=True)
class DetectorNoiseModel:
    """Distance-dependent misclassification plus box jitter.

    ``p_misclass(d)`` is ``p_near`` below ``near_limit``, ``p_far`` above
    ``far_limit`` and ``p_mid`` in between. Class probabilities are drawn
    uniformly from ``correct_probability`` for right labels; wrong labels use
    ``wrong_near_probability`` below ``near_limit`` and
    ``wrong_probability`` elsewhere.
    """

    seed: int = 0
    p_near: float = 0.9
    p_mid: float = 0.05
    p_far: float = 0.5
    near_limit: float = 0.8
    far_limit: float = 3.0
    jitter_px: float = 0.5
    correct_probability: Tuple[float, float] = (0.6, 1.0)
    wrong_probability: Tuple[float, float] = (0.3, 0.8)
    wrong_near_probability: Tuple[float, float] = (0.7, 1.0)
    confusion: Dict[str, Tuple[str, ...]] = field(default_factory=lambda: dict(DEFAULT_CONFUSION))

    def __post_init__(self):
        for name in ("p_near", "p_mid", "p_far"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}: must lie in [0, 1], got {v!r}")
        if self.jitter_px < 0:
            raise ValueError(f"jitter_px: must be >= 0, got {self.jitter_px!r}")
        for name in ("correct_probability", "wrong_probability", "wrong_near_probability"):
            lo, hi = getattr(self, name)
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError(f"{name}: need 0 <= low <= high <= 1, got {(lo, hi)!r}")

    @classmethod
    def noiseless(cls, seed: int = 0) -> "DetectorNoiseModel":
        return cls(seed=seed, p_near=0.0, p_mid=0.0, p_far=0.0, jitter_px=0.0)

    def p_misclass(self, distance: float) -> float:
        if distance < self.near_limit - _BOUNDARY_TOL:
            return self.p_near
        if distance > self.far_limit + _BOUNDARY_TOL:
            return self.p_far
        return self.p_mid

    def wrong_classes(self, true_class: str) -> Tuple[str, ...]:
        return self.confusion.get(true_class, _FALLBACK_CONFUSION)


def _emit(scene: SceneSpec, pose: CameraPose, noise: DetectorNoiseModel, rng) -> List[Tuple[int, Detection]]:
    intr = scene.intrinsics
    out = []
    center_w = pose.center
    for obj in scene.objects:
        gt = reconstruct_bbox(obj.position, obj.extent, pose, intr)
        if gt is None:
            continue
        jitter = rng.normal(0.0, noise.jitter_px, size=4) if noise.jitter_px > 0 else np.zeros(4)
        u0, v0, u1, v1 = np.add(gt.as_tuple(), jitter)
        box = BoundingBox2D(min(u0, u1), min(v0, v1), max(u0, u1), max(v0, v1)).clip(intr.width, intr.height)
        distance = float(np.linalg.norm(np.asarray(obj.position) - center_w))
        wrong = rng.random() < noise.p_misclass(distance)
        if wrong:
            choices = noise.wrong_classes(obj.true_class)
            label = choices[int(rng.integers(len(choices)))]
            near = distance < noise.near_limit - _BOUNDARY_TOL
            lo, hi = noise.wrong_near_probability if near else noise.wrong_probability
        else:
            label = obj.true_class
            lo, hi = noise.correct_probability
        prob = float(rng.uniform(lo, hi))
        if box is None:
            continue
        depth = float((pose.rotation @ np.asarray(obj.position) + pose.translation)[2])
        out.append((obj.id, Detection(box, ClassObservation(label, prob), depth)))
    return out


def simulate_detector(scene: SceneSpec, pose: CameraPose, noise: DetectorNoiseModel,
                      rng: Optional[np.random.Generator] = None) -> List[Detection]:
    """Detections of every object in view. Pass ``rng`` to continue a stream."""
    if rng is None:
        rng = np.random.default_rng(noise.seed)
    return [det for _, det in _emit(scene, pose, noise, rng)]


@dataclass(frozen=True)
class FrameLog:
    """What happened to the target object in one frame."""

    frame_index: int
    distance: float
    emitted_class: str
    maintained_class: str
    objectness: float


@dataclass
class RunReport:
    frames: List[FrameInput]
    results: List[FrameResult]
    snapshot: Tuple[ObjectRecord, ...]
    metrics: List[FrameLog]
    final_classes: Dict[int, Optional[str]]
    correct: Dict[int, bool]

    @property
    def all_correct(self) -> bool:
        return all(self.correct.values())


def maintained_record(snapshot: Sequence[ObjectRecord], obj: SceneObject) -> Optional[ObjectRecord]:
    """Stored record closest to ``obj``, if any lies within its largest dimension."""
    best, best_d = None, max(obj.extent.width_m, obj.extent.height_m)
    for rec in snapshot:
        d = math.dist(rec.position, obj.position)
        if d <= best_d and (best is None or d < best_d):
            best, best_d = rec, d
    return best


def run_trajectory(scene: SceneSpec, trajectory: Trajectory, noise: DetectorNoiseModel,
                   store: Optional[ObjectStore] = None, target_id: int = 0) -> RunReport:
    """Fly ``trajectory`` through ``scene`` and feed the detector output to ``store``."""
    store = ObjectStore() if store is None else store
    rng = np.random.default_rng(noise.seed)
    target = scene.objects[target_id]
    frames, results, metrics = [], [], []
    for idx, pose in zip(trajectory.frame_indices, trajectory.poses):
        emitted = _emit(scene, pose, noise, rng)
        frame = FrameInput(idx, pose, tuple(det for _, det in emitted))
        result = process_frame(store, frame, scene.intrinsics)
        frames.append(frame)
        results.append(result)
        label = next((det.class_obs.class_id for oid, det in emitted if oid == target_id), "")
        rec = maintained_record(store.snapshot(), target)
        metrics.append(FrameLog(
            idx, float(np.linalg.norm(np.asarray(target.position) - pose.center)), label,
            "" if rec is None else rec.class_id, float("nan") if rec is None else rec.objectness,
        ))
    snapshot = store.snapshot()
    final = {}
    for obj in scene.objects:
        rec = maintained_record(snapshot, obj)
        final[obj.id] = None if rec is None else rec.class_id
    correct = {obj.id: final[obj.id] == obj.true_class for obj in scene.objects}
    return RunReport(frames, results, snapshot, metrics, final, correct)
