"""Run configuration shared by the CLI commands.

Config files are flat JSON objects whose keys mirror :class:`RunConfig`
fields; unknown keys are rejected.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional

from .geometry import CameraIntrinsics
from .scoring import DepthRange, ScoreWeights
from .sim import DetectorNoiseModel
from .store import POLICIES, SEARCH_MODES, ObjectStore
from .validation import (check_choice, check_count, check_positive, check_real,
                         check_unit_interval)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    alpha: float = 0.4
    d_min: float = 0.8
    d_max: float = 3.0
    iou_threshold: float = 0.9
    k: int = 3
    seed: int = 0
    policy: str = "objectness"
    search: str = "knn"
    fx: float = 525.0
    fy: float = 525.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480
    angles: List[float] = field(default_factory=lambda: [-45.0, 0.0, 45.0])
    start_distance: float = 3.0
    end_distance: float = 0.3
    step: float = 0.1
    n_objects: int = 1
    noiseless: bool = False
    p_near: float = 0.9
    p_mid: float = 0.05
    p_far: float = 0.5
    jitter_px: float = 0.5
    bench_store_sizes: List[int] = field(default_factory=lambda: [0, 100, 1000, 10000])
    bench_detections: List[int] = field(default_factory=lambda: [1, 10, 50])
    bench_frames: int = 50
    out: str = "out"

    def validate(self) -> "RunConfig":
        try:
            check_unit_interval("alpha", self.alpha)
            check_positive("d_min", self.d_min)
            check_positive("d_max", self.d_max)
            if not self.d_min < self.d_max:
                raise ValueError(f"d_max: must exceed d_min, got {self.d_max!r}")
            check_unit_interval("iou_threshold", self.iou_threshold)
            check_count("k", self.k)
            check_count("seed", self.seed, minimum=0)
            check_choice("policy", self.policy, POLICIES)
            check_choice("search", self.search, SEARCH_MODES)
            for key in ("fx", "fy", "cx", "cy"):
                check_positive(key, getattr(self, key))
            check_count("width", self.width)
            check_count("height", self.height)
            if not isinstance(self.angles, list) or not self.angles:
                raise ValueError("angles: expected a non-empty list of degrees")
            for a in self.angles:
                check_real("angles", a)
            check_positive("start_distance", self.start_distance)
            check_positive("end_distance", self.end_distance)
            if not self.start_distance > self.end_distance:
                raise ValueError("start_distance: must exceed end_distance")
            check_positive("step", self.step)
            check_count("n_objects", self.n_objects)
            if not isinstance(self.noiseless, bool):
                raise ValueError(f"noiseless: expected true/false, got {self.noiseless!r}")
            for key in ("p_near", "p_mid", "p_far"):
                check_unit_interval(key, getattr(self, key))
            check_real("jitter_px", self.jitter_px)
            if self.jitter_px < 0:
                raise ValueError(f"jitter_px: must be >= 0, got {self.jitter_px!r}")
            for key in ("bench_store_sizes", "bench_detections"):
                values = getattr(self, key)
                if not isinstance(values, list) or not values:
                    raise ValueError(f"{key}: expected a non-empty list of integers")
                for v in values:
                    check_count(key, v, minimum=0 if key == "bench_store_sizes" else 1)
            check_count("bench_frames", self.bench_frames)
            self.intrinsics()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.fx, self.fy, self.cx, self.cy, self.width, self.height)

    def make_store(self, **overrides) -> ObjectStore:
        kwargs = dict(depth_range=DepthRange(self.d_min, self.d_max), weights=ScoreWeights(self.alpha),
                      iou_threshold=self.iou_threshold, k=self.k, policy=self.policy, search=self.search)
        kwargs.update(overrides)
        return ObjectStore(**kwargs)

    def noise_model(self, seed: Optional[int] = None) -> DetectorNoiseModel:
        seed = self.seed if seed is None else seed
        if self.noiseless:
            return DetectorNoiseModel.noiseless(seed)
        return DetectorNoiseModel(seed=seed, p_near=self.p_near, p_mid=self.p_mid, p_far=self.p_far,
                                  jitter_px=self.jitter_px)

    def to_dict(self) -> dict:
        return asdict(self)


_INT_KEYS = {"k", "seed", "width", "height", "n_objects", "bench_frames"}


def _coerce(key: str, value):
    # JSON has one number type; accept 3.0 for integer keys
    if key in _INT_KEYS and isinstance(value, float) and value.is_integer():
        return int(value)
    if key == "angles" and isinstance(value, list):
        return [float(v) if isinstance(v, int) and not isinstance(v, bool) else v for v in value]
    return value


def config_from_dict(raw: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown configuration key")
    return RunConfig(**{k: _coerce(k, v) for k, v in raw.items()}).validate()


def load_config(path: Optional[str | Path] = None, **overrides) -> RunConfig:
    """Read ``path`` (if given), apply non-None ``overrides`` and validate."""
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: {path} is not valid JSON ({exc.msg}, line {exc.lineno})") from None
        if not isinstance(raw, dict):
            raise ConfigError("config: expected a flat JSON object")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(raw)
