"""Pinhole camera geometry: projection, back-projection, box reconstruction and IOU.

Conventions: a :class:`CameraPose` maps world points into the camera frame
(``p_cam = R @ p_world + t``); the camera looks along +z, x points right and
y points down in the image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from .validation import check_positive

#: Camera-frame depth (m) at or below which a point counts as behind the camera.
DEPTH_EPS = 1e-6

_ORTHO_TOL = 1e-9


@dataclass(frozen=True, slots=True)
class CameraIntrinsics:
    """Focal lengths and principal point in pixels, plus image size."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        check_positive("fx", self.fx)
        check_positive("fy", self.fy)
        check_positive("width", self.width)
        check_positive("height", self.height)
        if not 0.0 < self.cx < self.width:
            raise ValueError(f"cx: must lie in (0, width), got {self.cx!r}")
        if not 0.0 < self.cy < self.height:
            raise ValueError(f"cy: must lie in (0, height), got {self.cy!r}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


def _cross(a, b):
    return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]


@dataclass(frozen=True)
class CameraPose:
    """World-to-camera rigid transform ``[R|t]``.

    ``quaternion`` (w, x, y, z) is kept when the pose was built from one so
    that serialising the pose reproduces the exact same input.
    """

    rotation: np.ndarray
    translation: np.ndarray
    quaternion: Optional[Tuple[float, float, float, float]] = field(
        default=None, compare=False, repr=False
    )

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=float)
        trans = np.array(self.translation, dtype=float).reshape(-1)
        if rot.shape != (3, 3) or trans.shape != (3,):
            raise ValueError("pose: rotation must be 3x3 and translation a 3-vector")
        if not (np.all(np.isfinite(rot)) and np.all(np.isfinite(trans))):
            raise ValueError("pose: non-finite entries")
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > _ORTHO_TOL:
            raise ValueError("pose: rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > _ORTHO_TOL:
            raise ValueError("pose: rotation determinant must be +1")
        rot.flags.writeable = False
        trans.flags.writeable = False
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)
        # plain-float copies: scalar projection is hot and numpy is slow on 3-vectors
        object.__setattr__(self, "_rows", tuple(tuple(float(c) for c in row) for row in rot))
        object.__setattr__(self, "_t", tuple(float(c) for c in trans))

    def __eq__(self, other):
        if not isinstance(other, CameraPose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls.from_quaternion((1.0, 0.0, 0.0, 0.0), (0.0, 0.0, 0.0))

    @classmethod
    def from_quaternion(cls, quaternion_wxyz, translation) -> "CameraPose":
        q = tuple(float(c) for c in quaternion_wxyz)
        if len(q) != 4:
            raise ValueError("pose: quaternion must have 4 components (w, x, y, z)")
        rot = Rotation.from_quat(q, scalar_first=True).as_matrix()
        return cls(rot, translation, quaternion=q)

    @classmethod
    def look_at(cls, eye, target, up=(0.0, 0.0, 1.0)) -> "CameraPose":
        """Camera at ``eye`` looking at ``target``; image y axis points against ``up``.

        The result is routed through a quaternion so it serialises exactly.
        """
        eye = np.asarray(eye, dtype=float)
        forward = np.asarray(target, dtype=float) - eye
        forward /= np.linalg.norm(forward)
        right = _cross(forward, up)
        norm = math.sqrt(right[0] ** 2 + right[1] ** 2 + right[2] ** 2)
        if norm < 1e-12:
            raise ValueError("look_at: viewing direction is parallel to up")
        right = [c / norm for c in right]
        rot = np.array([right, _cross(forward, right), forward])
        q = tuple(float(c) for c in Rotation.from_matrix(rot).as_quat(scalar_first=True))
        rot = Rotation.from_quat(q, scalar_first=True).as_matrix()
        return cls(rot, -(rot @ eye), quaternion=q)

    def as_quaternion(self) -> Tuple[float, float, float, float]:
        if self.quaternion is not None:
            return self.quaternion
        return tuple(float(c) for c in Rotation.from_matrix(self.rotation).as_quat(scalar_first=True))

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -(self.rotation.T @ self.translation)

    def point_to_camera(self, p) -> Tuple[float, float, float]:
        """Single world point into the camera frame, as python floats."""
        x, y, z = p
        (r00, r01, r02), (r10, r11, r12), (r20, r21, r22) = self._rows
        tx, ty, tz = self._t
        return (r00 * x + r01 * y + r02 * z + tx, r10 * x + r11 * y + r12 * z + ty,
                r20 * x + r21 * y + r22 * z + tz)

    def point_to_world(self, p) -> Tuple[float, float, float]:
        (r00, r01, r02), (r10, r11, r12), (r20, r21, r22) = self._rows
        tx, ty, tz = self._t
        x, y, z = p[0] - tx, p[1] - ty, p[2] - tz
        return (r00 * x + r10 * y + r20 * z, r01 * x + r11 * y + r21 * z, r02 * x + r12 * y + r22 * z)

    def to_camera(self, points) -> np.ndarray:
        """World points, shape (3,) or (n, 3), into the camera frame."""
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def to_world(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.translation) @ self.rotation


@dataclass(frozen=True, slots=True)
class BoundingBox2D:
    u_min: float
    v_min: float
    u_max: float
    v_max: float

    def __post_init__(self):
        if not (self.u_min <= self.u_max and self.v_min <= self.v_max):
            raise ValueError(f"bbox: min corner must not exceed max corner, got {self.as_tuple()}")

    @property
    def width(self) -> float:
        return self.u_max - self.u_min

    @property
    def height(self) -> float:
        return self.v_max - self.v_min

    @property
    def area(self) -> float:
        return (self.u_max - self.u_min) * (self.v_max - self.v_min)

    @property
    def center(self) -> Tuple[float, float]:
        return (0.5 * (self.u_min + self.u_max), 0.5 * (self.v_min + self.v_max))

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.u_min, self.v_min, self.u_max, self.v_max)

    def within(self, width: float, height: float) -> bool:
        return self.u_min >= 0.0 and self.v_min >= 0.0 and self.u_max <= width and self.v_max <= height

    def clip(self, width: float, height: float) -> Optional["BoundingBox2D"]:
        """Intersection with the image rectangle, or None when they do not overlap."""
        u0, v0 = max(self.u_min, 0.0), max(self.v_min, 0.0)
        u1, v1 = min(self.u_max, float(width)), min(self.v_max, float(height))
        if u0 >= u1 or v0 >= v1:
            return None
        return BoundingBox2D(u0, v0, u1, v1)


@dataclass(frozen=True, slots=True)
class MetricExtent:
    """Object width and height in meters, perpendicular to the optical axis."""

    width_m: float
    height_m: float

    def __post_init__(self):
        check_positive("width_m", self.width_m)
        check_positive("height_m", self.height_m)

    @classmethod
    def from_bbox(cls, bbox: BoundingBox2D, depth: float, intr: CameraIntrinsics) -> "MetricExtent":
        return cls(bbox.width * depth / intr.fx, bbox.height * depth / intr.fy)


def project_point(p, pose: CameraPose, intr: CameraIntrinsics) -> Optional[Tuple[float, float]]:
    """Pixel ``(u, v)`` of world point ``p``, or None when it is behind the camera."""
    x, y, z = pose.point_to_camera(p)
    if z <= DEPTH_EPS:
        return None
    return (intr.fx * x / z + intr.cx, intr.fy * y / z + intr.cy)


def back_project(pixel, depth: float, pose: CameraPose, intr: CameraIntrinsics) -> np.ndarray:
    """World point seen at ``pixel`` with camera-frame depth ``depth``."""
    depth = check_positive("depth", depth)
    u, v = pixel
    p_cam = ((u - intr.cx) * depth / intr.fx, (v - intr.cy) * depth / intr.fy, depth)
    return np.array(pose.point_to_world(p_cam))


def _box_corners(center, width_m: float, height_m: float, pose: CameraPose, intr: CameraIntrinsics):
    x, y, z = pose.point_to_camera(center)
    if z <= DEPTH_EPS:
        return None
    u = intr.fx * x / z + intr.cx
    v = intr.fy * y / z + intr.cy
    hw = width_m * intr.fx / (2.0 * z)
    hh = height_m * intr.fy / (2.0 * z)
    if u + hw <= 0.0 or u - hw >= intr.width or v + hh <= 0.0 or v - hh >= intr.height:
        return None
    return (u - hw, v - hh, u + hw, v + hh)


def reconstruct_bbox(
    center, extent: MetricExtent, pose: CameraPose, intr: CameraIntrinsics
) -> Optional[BoundingBox2D]:
    """Image box of an object with metric ``extent`` centered at world ``center``.

    Returns None when the center is behind the camera or the box misses the
    image entirely. The box is not clipped to the image.
    """
    corners = _box_corners(center, extent.width_m, extent.height_m, pose, intr)
    return None if corners is None else BoundingBox2D(*corners)


def clipped_box_corners(center, extent: MetricExtent, pose: CameraPose, intr: CameraIntrinsics):
    """``reconstruct_bbox(...).clip(...)`` as a plain corner tuple, or None."""
    c = _box_corners(center, extent.width_m, extent.height_m, pose, intr)
    if c is None:
        return None
    u0, v0 = max(c[0], 0.0), max(c[1], 0.0)
    u1, v1 = min(c[2], float(intr.width)), min(c[3], float(intr.height))
    if u0 >= u1 or v0 >= v1:
        return None
    return (u0, v0, u1, v1)


def reconstruct_bboxes(centers, extents, pose: CameraPose, intr: CameraIntrinsics):
    """Vectorised :func:`reconstruct_bbox` over ``n`` objects.

    ``extents`` is an (n, 2) array of (width_m, height_m). Returns an (n, 4)
    box array and a boolean visibility mask; rows of invisible objects are NaN.
    """
    centers = np.asarray(centers, dtype=float).reshape(-1, 3)
    extents = np.asarray(extents, dtype=float).reshape(-1, 2)
    pc = centers @ pose.rotation.T + pose.translation
    z = pc[:, 2]
    front = z > DEPTH_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(front, 1.0 / z, np.nan)
        u = intr.fx * pc[:, 0] * inv + intr.cx
        v = intr.fy * pc[:, 1] * inv + intr.cy
        hw = extents[:, 0] * (0.5 * intr.fx) * inv
        hh = extents[:, 1] * (0.5 * intr.fy) * inv
    boxes = np.empty((len(centers), 4))
    boxes[:, 0] = u - hw
    boxes[:, 1] = v - hh
    boxes[:, 2] = u + hw
    boxes[:, 3] = v + hh
    visible = front & (boxes[:, 2] > 0.0) & (boxes[:, 0] < intr.width) & (boxes[:, 3] > 0.0) & (
        boxes[:, 1] < intr.height)
    boxes[~visible] = np.nan
    return boxes, visible


def iou_corners(a, b) -> float:
    """IOU of two ``(u_min, v_min, u_max, v_max)`` tuples."""
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    inter = iw * ih if iw > 0.0 and ih > 0.0 else 0.0
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, inter / union)


def compute_iou(a: BoundingBox2D, b: BoundingBox2D) -> float:
    return iou_corners(a.as_tuple(), b.as_tuple())
