"""Depth score and objectness score.

The objectness of an observation blends the detector's class probability
with how well-placed the camera was: observations made from a distance at
which the whole object fits the view score higher.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import check_positive, check_real, check_unit_interval


@dataclass(frozen=True, slots=True)
class DepthRange:
    d_min: float = 0.8
    d_max: float = 3.0

    def __post_init__(self):
        check_positive("d_min", self.d_min)
        check_positive("d_max", self.d_max)
        if not self.d_min < self.d_max:
            raise ValueError(f"d_max: must exceed d_min ({self.d_min!r}), got {self.d_max!r}")


@dataclass(frozen=True, slots=True)
class ScoreWeights:
    alpha: float = 0.4

    def __post_init__(self):
        check_unit_interval("alpha", self.alpha)


@dataclass(frozen=True, slots=True)
class ClassObservation:
    class_id: str
    probability: float

    def __post_init__(self):
        check_unit_interval("probability", self.probability)


def depth_score(d: float, depth_range: DepthRange = DepthRange()) -> float:
    """Min-max normalised distance, clamped to [0, 1]."""
    d = check_positive("distance", d)
    s = (d - depth_range.d_min) / (depth_range.d_max - depth_range.d_min)
    return min(1.0, max(0.0, s))


def objectness_score(obs: ClassObservation, s_depth: float, weights: ScoreWeights = ScoreWeights()) -> float:
    s_depth = check_unit_interval("s_depth", s_depth)
    a = weights.alpha
    return a * obs.probability + (1.0 - a) * s_depth


def objectness_scores(probabilities, distances, depth_range: DepthRange = DepthRange(),
                      weights: ScoreWeights = ScoreWeights()) -> np.ndarray:
    """Array version of ``objectness_score(obs, depth_score(d))``."""
    p = np.asarray(probabilities, dtype=float)
    d = np.asarray(distances, dtype=float)
    if np.any((p < 0) | (p > 1)) or np.any(~np.isfinite(p)):
        raise ValueError("probability: all values must lie in [0, 1]")
    if np.any(~(d > 0)) or np.any(~np.isfinite(d)):
        raise ValueError("distance: all values must be finite and > 0")
    s = np.clip((d - depth_range.d_min) / (depth_range.d_max - depth_range.d_min), 0.0, 1.0)
    a = check_real("alpha", weights.alpha)
    return a * p + (1.0 - a) * s
