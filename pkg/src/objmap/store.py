"""The maintained object map and its insert/replace policy."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .geometry import CameraIntrinsics, CameraPose, MetricExtent, clipped_box_corners, iou_corners
from .scoring import ClassObservation, DepthRange, ScoreWeights, depth_score, objectness_score
from .validation import check_choice, check_count, check_unit_interval

POLICIES = ("objectness", "max_probability", "last_wins")
SEARCH_MODES = ("knn", "exhaustive")

_SCORE_TOL = 1e-12


class OutcomeKind(str, Enum):
    INSERTED = "inserted"
    REPLACED = "replaced"
    DISCARDED = "discarded"
    SKIPPED = "skipped"


@dataclass(frozen=True, slots=True)
class UpdateOutcome:
    kind: OutcomeKind
    record_id: Optional[int] = None
    reason: Optional[str] = None


@dataclass(frozen=True, slots=True)
class ObjectRecord:
    """One maintained object. ``id`` is None until the store accepts the record."""

    position: Tuple[float, float, float]
    extent: MetricExtent
    class_obs: ClassObservation
    objectness: float
    observed_depth: float
    frame_index: int
    id: Optional[int] = None

    @classmethod
    def create(cls, position, extent: MetricExtent, class_obs: ClassObservation, observed_depth: float,
               frame_index: int, depth_range: DepthRange = DepthRange(),
               weights: ScoreWeights = ScoreWeights()) -> "ObjectRecord":
        score = objectness_score(class_obs, depth_score(observed_depth, depth_range), weights)
        return cls(tuple(float(c) for c in position), extent, class_obs, score,
                   float(observed_depth), int(frame_index))

    @property
    def class_id(self) -> str:
        return self.class_obs.class_id

    def _with_id(self, rid: int) -> "ObjectRecord":
        return ObjectRecord(self.position, self.extent, self.class_obs, self.objectness,
                            self.observed_depth, self.frame_index, rid)


class _PointIndex:
    """KD-tree over a frozen prefix of points plus a linearly scanned buffer.

    Points are addressed by slot (insertion order). New points, and tree
    points that moved, live in the buffer until the next rebuild, which
    happens once the buffer outgrows ``buffer_size`` (default: adaptive,
    ``max(64, 2 * sqrt(n))``).
    """

    def __init__(self, buffer_size: Optional[int] = None):
        self.buffer_size = buffer_size
        self._pts = np.empty((16, 3))
        self._n = 0
        self._tree: Optional[cKDTree] = None
        self._tree_n = 0
        self._dirty: set = set()
        # buffered slots and a contiguous copy of their points
        self._buf_slots: List[int] = []
        self._buf_pos: dict = {}
        self._buf_pts = np.empty((16, 3))

    def __len__(self):
        return self._n

    @property
    def points(self) -> np.ndarray:
        return self._pts[: self._n]

    def _buffer(self, slot: int, p):
        j = self._buf_pos.get(slot)
        if j is None:
            j = len(self._buf_slots)
            if j == len(self._buf_pts):
                grown = np.empty((2 * j, 3))
                grown[:j] = self._buf_pts[:j]
                self._buf_pts = grown
            self._buf_slots.append(slot)
            self._buf_pos[slot] = j
        self._buf_pts[j] = p

    def add(self, p) -> int:
        if self._n == len(self._pts):
            grown = np.empty((2 * len(self._pts), 3))
            grown[: self._n] = self._pts[: self._n]
            self._pts = grown
        slot = self._n
        self._pts[slot] = p
        self._n += 1
        self._buffer(slot, p)
        self._maybe_rebuild()
        return slot

    def move(self, slot: int, p):
        self._pts[slot] = p
        if slot < self._tree_n:
            self._dirty.add(slot)
        self._buffer(slot, p)
        self._maybe_rebuild()

    def _maybe_rebuild(self):
        limit = max(64.0, 2.0 * math.sqrt(self._n)) if self.buffer_size is None else self.buffer_size
        if len(self._buf_slots) > limit:
            self._tree = cKDTree(self._pts[: self._n], copy_data=True)
            self._tree_n = self._n
            self._dirty.clear()
            self._buf_slots.clear()
            self._buf_pos.clear()

    def _distances(self, slots, q: np.ndarray) -> np.ndarray:
        return np.sqrt(((self._pts[slots] - q) ** 2).sum(axis=1))

    def scan(self, q, k: int) -> List[Tuple[float, int]]:
        """Exhaustive k nearest, ties broken by slot."""
        q = np.asarray(q, dtype=float)
        d = self._distances(np.arange(self._n), q)
        order = np.argsort(d, kind="stable")[:k]
        return [(float(d[i]), int(i)) for i in order]

    def prefetch(self, queries, k: int, margin: int = 4):
        """Tree candidates for many upcoming queries, in one batched call.

        Rows stay usable while the tree is not rebuilt; :meth:`query` drops
        points moved in the meantime and falls back to a live lookup if too
        few candidates survive.
        """
        if self._tree is None or len(queries) == 0:
            return None
        n_fetch = min(k + 1 + margin, self._tree_n)
        _, idx = self._tree.query(np.asarray(queries, dtype=float), k=n_fetch)
        return (self._tree, idx.reshape(len(queries), -1).tolist())

    def _valid(self, idx) -> List[int]:
        return [i for i in idx if i not in self._dirty] if self._dirty else idx

    def _tree_candidates(self, q: np.ndarray, k: int, hint) -> List[Tuple[float, int]]:
        cand = None
        if hint is not None and hint[0] is self._tree:
            cand = self._valid(hint[1])
            if len(cand) <= k and len(hint[1]) < self._tree_n:
                cand = None
        if cand is None:
            # a few extra neighbors usually absorb moved points; widen only if not
            for n_fetch in (k + 5, k + len(self._dirty) + 1):
                n_fetch = min(n_fetch, self._tree_n)
                _, idx = self._tree.query(q, k=n_fetch)
                cand = self._valid(np.atleast_1d(idx).tolist())
                if len(cand) > k or n_fetch == self._tree_n:
                    break
        if not cand:
            return []
        pairs = sorted(zip(self._distances(cand, q).tolist(), cand))
        if k < len(pairs) and len(cand) < self._tree_n:
            radius = pairs[k - 1][0] * (1.0 + 1e-9) + 1e-12
            if pairs[-1][0] <= radius:
                # the fetched set may end mid-tie; take every tree point at that radius
                ball = self._tree.query_ball_point(q, radius)
                extra = sorted(set(ball) - self._dirty - set(cand))
                if extra:
                    pairs = sorted(pairs + list(zip(self._distances(extra, q).tolist(), extra)))
        return pairs[:k]

    def _buffer_candidates(self, q: np.ndarray, k: int) -> List[Tuple[float, int]]:
        nb = len(self._buf_slots)
        if nb == 0:
            return []
        d = np.sqrt(((self._buf_pts[:nb] - q) ** 2).sum(axis=1))
        if nb > k:
            kth = np.partition(d, k - 1)[k - 1]
            picked = np.flatnonzero(d <= kth).tolist()
        else:
            picked = range(nb)
        return [(float(d[j]), self._buf_slots[j]) for j in picked]

    def query(self, q, k: int, hint=None) -> List[Tuple[float, int]]:
        """k nearest as ``(distance, slot)``, ties broken by slot.

        Same result as :meth:`scan`: buffer distances are computed from the
        identical coordinates, so no float differences creep in.
        """
        q = np.asarray(q, dtype=float)
        if self._tree is None:
            return self.scan(q, k)
        pairs = self._tree_candidates(q, k, hint) + self._buffer_candidates(q, k)
        pairs.sort()
        return pairs[:k]


class ObjectStore:
    """Spatially indexed set of maintained objects.

    Each new observation is compared against its ``k`` nearest stored
    objects by 2D IOU in the current view. A match above ``iou_threshold``
    is one physical object: the better observation (per ``policy``) is
    kept. Otherwise the observation becomes a new object.

    Updates are serialised by an internal lock; :meth:`snapshot` is safe to
    call from other threads.
    """

    def __init__(self, depth_range: DepthRange = DepthRange(), weights: ScoreWeights = ScoreWeights(),
                 iou_threshold: float = 0.9, k: int = 3, policy: str = "objectness",
                 search: str = "knn", brute_force_below: int = 16, index_buffer: Optional[int] = None):
        self.depth_range = depth_range
        self.weights = weights
        self.iou_threshold = check_unit_interval("iou_threshold", iou_threshold)
        self.k = check_count("k", k)
        self.policy = check_choice("policy", policy, POLICIES)
        self.search = check_choice("search", search, SEARCH_MODES)
        self.brute_force_below = check_count("brute_force_below", brute_force_below, minimum=0)
        if index_buffer is not None:
            check_count("index_buffer", index_buffer, minimum=0)
        self._index = _PointIndex(index_buffer)
        self._records: List[ObjectRecord] = []
        self._extents = np.empty((16, 2))
        self._lock = threading.RLock()

    def __len__(self):
        return len(self._records)

    def get(self, record_id: int) -> ObjectRecord:
        return self._records[record_id]

    def snapshot(self) -> Tuple[ObjectRecord, ...]:
        with self._lock:
            return tuple(self._records)

    def arrays(self):
        """(positions (n, 3), extents (n, 2)) copies indexed by record id."""
        with self._lock:
            n = len(self._records)
            return self._index.points.copy(), self._extents[:n].copy()

    def _neighbors(self, query, k: int, hint=None) -> List[Tuple[float, int]]:
        if self.search == "exhaustive" or len(self._records) < self.brute_force_below:
            return self._index.scan(query, k)
        return self._index.query(query, k, hint)

    def search_knn(self, query, k: Optional[int] = None) -> List[ObjectRecord]:
        """Up to ``k`` records nearest to ``query``, closest first, ties by id."""
        k = self.k if k is None else check_count("k", k)
        with self._lock:
            if not self._records:
                return []
            return [self._records[i] for _, i in self._neighbors(query, k)]

    def insert(self, record: ObjectRecord) -> int:
        """Add ``record`` unconditionally and return its new id."""
        with self._lock:
            rid = len(self._records)
            slot = self._index.add(record.position)
            assert slot == rid
            if rid == len(self._extents):
                grown = np.empty((2 * len(self._extents), 2))
                grown[:rid] = self._extents[:rid]
                self._extents = grown
            self._extents[rid] = (record.extent.width_m, record.extent.height_m)
            self._records.append(record._with_id(rid))
            return rid

    def _replace(self, rid: int, record: ObjectRecord):
        self._records[rid] = record._with_id(rid)
        self._index.move(rid, record.position)
        self._extents[rid] = (record.extent.width_m, record.extent.height_m)

    def _check_record(self, record: ObjectRecord):
        expected = objectness_score(
            record.class_obs, depth_score(record.observed_depth, self.depth_range), self.weights
        )
        if abs(expected - record.objectness) > _SCORE_TOL:
            raise ValueError(
                f"objectness: record score {record.objectness!r} does not match the store's "
                f"scoring configuration ({expected!r})"
            )

    def _prefers(self, new: ObjectRecord, old: ObjectRecord) -> bool:
        if self.policy == "objectness":
            return new.objectness > old.objectness
        if self.policy == "max_probability":
            return new.class_obs.probability > old.class_obs.probability
        return True

    @staticmethod
    def _view_box(record: ObjectRecord, pose: CameraPose, intr: CameraIntrinsics):
        # detector boxes never leave the image, so compare image-bounded boxes
        return clipped_box_corners(record.position, record.extent, pose, intr)

    def update_with_detection(self, o_new: ObjectRecord, pose: CameraPose, intr: CameraIntrinsics) -> UpdateOutcome:
        """Fold one observation into the store.

        The best-overlapping neighbor (highest IOU above the threshold, then
        nearest, then lowest id) is replaced only when ``o_new`` is strictly
        better under the store's policy; otherwise ``o_new`` is discarded.
        With no overlapping neighbor ``o_new`` is inserted.
        """
        self._check_record(o_new)
        with self._lock:
            return self._update(o_new, pose, intr, None)

    def update_many(self, records, pose: CameraPose, intr: CameraIntrinsics) -> List[UpdateOutcome]:
        """Same as calling :meth:`update_with_detection` on each record in order.

        Neighbor candidates for the whole batch are fetched from the tree at
        once, which is much cheaper than one lookup per record.
        """
        for rec in records:
            self._check_record(rec)
        with self._lock:
            hints = None
            if self.search == "knn" and len(records) > 1 and len(self._records) >= self.brute_force_below:
                hints = self._index.prefetch([r.position for r in records], self.k)
            rows = hints[1] if hints else None
            return [self._update(rec, pose, intr, None if rows is None else (hints[0], rows[i]))
                    for i, rec in enumerate(records)]

    def _update(self, o_new: ObjectRecord, pose, intr, hint) -> UpdateOutcome:
        if not self._records:
            return UpdateOutcome(OutcomeKind.INSERTED, self.insert(o_new))
        new_box = self._view_box(o_new, pose, intr)
        best, best_iou = None, -1.0
        if new_box is not None:
            for _, rid in self._neighbors(o_new.position, self.k, hint):
                box = self._view_box(self._records[rid], pose, intr)
                iou = 0.0 if box is None else iou_corners(new_box, box)
                if iou > self.iou_threshold and iou > best_iou:
                    best, best_iou = rid, iou
        if best is None:
            return UpdateOutcome(OutcomeKind.INSERTED, self.insert(o_new))
        if self._prefers(o_new, self._records[best]):
            self._replace(best, o_new)
            return UpdateOutcome(OutcomeKind.REPLACED, best)
        return UpdateOutcome(OutcomeKind.DISCARDED, best)
