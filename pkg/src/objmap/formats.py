"""Line-delimited JSON formats: detection logs, snapshots and run reports.

Detection log, one frame per line::

    {"frame": 0, "pose": {"q": [w, x, y, z], "t": [x, y, z]},
     "detections": [{"bbox": [u_min, v_min, u_max, v_max], "class": "chair",
                     "probability": 0.724, "mean_depth": 3.0}]}

``q``/``t`` is the world-to-camera rotation (unit quaternion, scalar first)
and translation. Floats are written with ``repr`` precision, so emitting
and re-reading a log is lossless.
"""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Iterable, List, Sequence

from .geometry import BoundingBox2D, CameraPose, MetricExtent
from .pipeline import Detection, FrameInput, FrameResult, RejectedDetection
from .scoring import ClassObservation
from .store import ObjectRecord


class LogFormatError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def _dumps(obj) -> str:
    return json.dumps(obj, allow_nan=False)


def frame_to_line(frame: FrameInput) -> str:
    dets = []
    for det in frame.detections:
        if isinstance(det, RejectedDetection):
            continue
        dets.append({
            "bbox": list(det.bbox.as_tuple()),
            "class": det.class_obs.class_id,
            "probability": det.class_obs.probability,
            "mean_depth": det.mean_depth,
        })
    pose = frame.pose
    return _dumps({
        "frame": frame.frame_index,
        "pose": {"q": list(pose.as_quaternion()), "t": [float(c) for c in pose.translation]},
        "detections": dets,
    })


def write_detection_log(frames: Iterable[FrameInput], fh) -> None:
    for frame in frames:
        fh.write(frame_to_line(frame) + "\n")


def _numbers(value, n: int, what: str) -> List[float]:
    if not isinstance(value, list) or len(value) != n:
        raise ValueError(f"{what}: expected a list of {n} numbers")
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ValueError(f"{what}: expected finite numbers, got {v!r}")
        out.append(float(v))
    return out


def _parse_detection(raw) -> Detection | RejectedDetection:
    # the frame line is well-formed at this point; a bad detection is skipped, not fatal
    try:
        if not isinstance(raw, dict):
            raise ValueError("detection: expected an object")
        bbox = BoundingBox2D(*_numbers(raw.get("bbox"), 4, "bbox"))
        label = raw.get("class")
        if not isinstance(label, str) or not label:
            raise ValueError("class: expected a non-empty string")
        prob = raw.get("probability")
        depth = raw.get("mean_depth")
        if isinstance(prob, bool) or not isinstance(prob, (int, float)):
            raise ValueError("probability: expected a number")
        if isinstance(depth, bool) or not isinstance(depth, (int, float)):
            raise ValueError("mean_depth: expected a number")
        return Detection(bbox, ClassObservation(label, float(prob)), float(depth))
    except (ValueError, TypeError) as exc:
        return RejectedDetection(str(exc))


def parse_frame_line(line: str, line_no: int = 1) -> FrameInput:
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise LogFormatError(line_no, f"invalid JSON ({exc.msg})") from None
    if not isinstance(raw, dict):
        raise LogFormatError(line_no, "expected a JSON object")
    try:
        index = raw["frame"]
        if isinstance(index, bool) or not isinstance(index, int):
            raise ValueError("frame: expected an integer")
        pose_raw = raw["pose"]
        if not isinstance(pose_raw, dict):
            raise ValueError("pose: expected an object with q and t")
        pose = CameraPose.from_quaternion(_numbers(pose_raw.get("q"), 4, "pose.q"),
                                          _numbers(pose_raw.get("t"), 3, "pose.t"))
        dets_raw = raw.get("detections", [])
        if not isinstance(dets_raw, list):
            raise ValueError("detections: expected a list")
    except KeyError as exc:
        raise LogFormatError(line_no, f"missing key {exc.args[0]!r}") from None
    except ValueError as exc:
        raise LogFormatError(line_no, str(exc)) from None
    return FrameInput(index, pose, tuple(_parse_detection(d) for d in dets_raw))


def read_detection_log(fh) -> List[FrameInput]:
    frames: List[FrameInput] = []
    for line_no, line in enumerate(fh, start=1):
        if not line.strip():
            continue
        frame = parse_frame_line(line, line_no)
        if frames and frame.frame_index <= frames[-1].frame_index:
            raise LogFormatError(line_no, f"frame {frame.frame_index} does not follow frame {frames[-1].frame_index}")
        frames.append(frame)
    return frames


def record_to_dict(rec: ObjectRecord) -> dict:
    return {
        "id": rec.id,
        "class": rec.class_id,
        "probability": rec.class_obs.probability,
        "objectness": rec.objectness,
        "position": list(rec.position),
        "extent": [rec.extent.width_m, rec.extent.height_m],
        "observed_depth": rec.observed_depth,
        "frame_index": rec.frame_index,
    }


def record_from_dict(raw: dict) -> ObjectRecord:
    return ObjectRecord(
        position=tuple(float(c) for c in raw["position"]),
        extent=MetricExtent(*raw["extent"]),
        class_obs=ClassObservation(raw["class"], float(raw["probability"])),
        objectness=float(raw["objectness"]),
        observed_depth=float(raw["observed_depth"]),
        frame_index=int(raw["frame_index"]),
        id=raw["id"],
    )


def write_snapshot(records: Sequence[ObjectRecord], fh) -> None:
    for rec in records:
        fh.write(_dumps(record_to_dict(rec)) + "\n")


def read_snapshot(fh) -> List[ObjectRecord]:
    return [record_from_dict(json.loads(line)) for line in fh if line.strip()]


def outcome_to_dict(outcome) -> dict:
    d = {"kind": outcome.kind.value, "id": outcome.record_id}
    if outcome.reason is not None:
        d["reason"] = outcome.reason
    return d


def frame_result_to_dict(result: FrameResult) -> dict:
    """Report line for one frame; latency is deliberately left out."""
    return {
        "type": "frame",
        "frame": result.frame_index,
        "outcomes": [outcome_to_dict(o) for o in result.outcomes],
        "projected": [[rid, list(box.as_tuple())] for rid, box in result.projected_records],
    }


def write_report(report, scene, fh) -> None:
    for result in report.results:
        fh.write(_dumps(frame_result_to_dict(result)) + "\n")
    for rec in report.snapshot:
        fh.write(_dumps({"type": "record", **record_to_dict(rec)}) + "\n")
    for obj in scene.objects:
        fh.write(_dumps({
            "type": "object", "id": obj.id, "true_class": obj.true_class,
            "final_class": report.final_classes[obj.id], "correct": report.correct[obj.id],
        }) + "\n")


def metrics_csv(report) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["frame", "distance", "emitted_class", "maintained_class", "objectness"])
    for m in report.metrics:
        writer.writerow([m.frame_index, repr(m.distance), m.emitted_class, m.maintained_class,
                         "" if math.isnan(m.objectness) else repr(m.objectness)])
    return buf.getvalue()


def timing_csv(report) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["frame", "elapsed_us"])
    for r in report.results:
        writer.writerow([r.frame_index, f"{r.elapsed_us:.3f}"])
    return buf.getvalue()
