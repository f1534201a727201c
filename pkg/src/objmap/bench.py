"""Per-frame latency measurements against large synthetic stores."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .geometry import BoundingBox2D, CameraIntrinsics, CameraPose, MetricExtent, reconstruct_bboxes
from .pipeline import Detection, FrameInput, process_frame
from .scoring import ClassObservation
from .sim import CLASSES, DEFAULT_INTRINSICS
from .store import ObjectRecord, ObjectStore

_DENSITY = 2.0  # objects per square meter of floor


@dataclass(frozen=True)
class BenchRow:
    store_size: int
    detections: int
    frames: int
    median_us: float
    p99_us: float


def _side(n: int) -> float:
    return max(10.0, math.sqrt(n / _DENSITY))


def populate_store(store: ObjectStore, n: int, rng: np.random.Generator) -> ObjectStore:
    """Insert ``n`` random, already-scored objects into ``store``."""
    side = _side(n)
    for _ in range(n):
        pos = (rng.uniform(0, side), rng.uniform(0, side), rng.uniform(0.2, 1.5))
        extent = MetricExtent(rng.uniform(0.3, 1.0), rng.uniform(0.3, 1.0))
        obs = ClassObservation(CLASSES[int(rng.integers(len(CLASSES)))], float(rng.uniform(0.3, 1.0)))
        store.insert(ObjectRecord.create(pos, extent, obs, rng.uniform(0.5, 4.0), 0,
                                         store.depth_range, store.weights))
    return store


def make_frames(store: ObjectStore, n_detections: int, n_frames: int, rng: np.random.Generator,
                intr: CameraIntrinsics = DEFAULT_INTRINSICS) -> List[FrameInput]:
    """Frames mixing re-detections of stored objects with never-seen ones."""
    side = _side(len(store))
    positions, extents = store.arrays()
    frames = []
    for idx in range(n_frames):
        yaw = rng.uniform(0, 2 * math.pi)
        eye = np.array([rng.uniform(0, side), rng.uniform(0, side), 0.6])
        direction = np.array([math.cos(yaw), math.sin(yaw), 0.0])
        pose = CameraPose.look_at(eye, eye + direction)
        dets = []
        if len(positions):
            boxes, visible = reconstruct_bboxes(positions, extents, pose, intr)
            depth = pose.to_camera(positions)[:, 2]
            ok = np.flatnonzero(visible & (depth > 0.5))
            for i in rng.permutation(ok)[: n_detections // 2]:
                clipped = BoundingBox2D(*boxes[i]).clip(intr.width, intr.height)
                if clipped is None:
                    continue
                obs = ClassObservation(CLASSES[int(rng.integers(len(CLASSES)))], float(rng.uniform(0.3, 1.0)))
                dets.append(Detection(clipped, obs, float(depth[i])))
        while len(dets) < n_detections:
            w, h = rng.uniform(20, 200, size=2)
            u, v = rng.uniform(w / 2, intr.width - w / 2), rng.uniform(h / 2, intr.height - h / 2)
            obs = ClassObservation(CLASSES[int(rng.integers(len(CLASSES)))], float(rng.uniform(0.3, 1.0)))
            dets.append(Detection(BoundingBox2D(u - w / 2, v - h / 2, u + w / 2, v + h / 2), obs,
                                  float(rng.uniform(0.5, 5.0))))
        frames.append(FrameInput(idx, pose, tuple(dets)))
    return frames


def time_frames(store: ObjectStore, frames: Sequence[FrameInput], intr: CameraIntrinsics = DEFAULT_INTRINSICS):
    """Process ``frames``; returns (per-frame latencies in us, per-frame outcomes)."""
    latencies, outcomes = [], []
    for frame in frames:
        result = process_frame(store, frame, intr)
        latencies.append(result.elapsed_us)
        outcomes.append(result.outcomes)
    return latencies, outcomes


def run_bench(store_sizes: Sequence[int], detection_counts: Sequence[int], n_frames: int = 50,
              seed: int = 0, store_factory=ObjectStore, intr: CameraIntrinsics = DEFAULT_INTRINSICS) -> List[BenchRow]:
    rows = []
    for size in store_sizes:
        for n_det in detection_counts:
            rng = np.random.default_rng([seed, size, n_det])
            store = populate_store(store_factory(), size, rng)
            frames = make_frames(store, n_det, n_frames, rng, intr)
            # warm-up frame keeps first-call overhead out of the numbers
            process_frame(store_factory(), frames[0], intr)
            lat, _ = time_frames(store, frames, intr)
            rows.append(BenchRow(size, n_det, n_frames, float(np.median(lat)), float(np.percentile(lat, 99))))
    return rows


@dataclass(frozen=True)
class SearchComparison:
    store_size: int
    detections: int
    knn_median_us: float
    exhaustive_median_us: float
    identical: bool


def compare_search(store_size: int = 10_000, n_detections: int = 50, n_frames: int = 30, seed: int = 0,
                   intr: CameraIntrinsics = DEFAULT_INTRINSICS, **store_kwargs) -> SearchComparison:
    """Run the same frames through a KD-tree store and an exhaustive-scan store."""
    results = {}
    for mode in ("knn", "exhaustive"):
        rng = np.random.default_rng([seed, store_size, n_detections])
        store = populate_store(ObjectStore(search=mode, **store_kwargs), store_size, rng)
        frames = make_frames(store, n_detections, n_frames, rng, intr)
        lat, outcomes = time_frames(store, frames, intr)
        results[mode] = (float(np.median(lat)), outcomes, store.snapshot())
    knn, exh = results["knn"], results["exhaustive"]
    return SearchComparison(store_size, n_detections, knn[0], exh[0], knn[1] == exh[1] and knn[2] == exh[2])
