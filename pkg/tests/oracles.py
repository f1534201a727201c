"""Reference implementations used only by the tests.

Everything here is plain Python over lists and tuples so it shares no code
with the package beyond the record dataclass it reads fields from.
"""

import json
import math


def mat_vec(rows, v):
    return tuple(sum(r[i] * v[i] for i in range(3)) for r in rows)


def to_camera(rows, t, p):
    x, y, z = mat_vec(rows, p)
    return (x + t[0], y + t[1], z + t[2])


def box_in_view(position, width_m, height_m, rows, t, fx, fy, cx, cy, w, h):
    """Image-clipped box of a stored object, or None when it cannot be seen."""
    x, y, z = to_camera(rows, t, position)
    if z <= 1e-6:
        return None
    u = fx * x / z + cx
    v = fy * y / z + cy
    hw = width_m * fx / z / 2
    hh = height_m * fy / z / 2
    u0, v0, u1, v1 = max(u - hw, 0.0), max(v - hh, 0.0), min(u + hw, w), min(v + hh, h)
    if u1 <= u0 or v1 <= v0:
        return None
    return (u0, v0, u1, v1)


def iou(a, b):
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return 0.0 if union <= 0 else min(1.0, inter / union)


def raster_iou(a, b, cells=300):
    """IOU by counting cell centers of a regular grid covering both boxes."""
    lo_u, lo_v = min(a[0], b[0]), min(a[1], b[1])
    hi_u, hi_v = max(a[2], b[2]), max(a[3], b[3])
    du, dv = (hi_u - lo_u) / cells, (hi_v - lo_v) / cells
    inter = union = 0
    for i in range(cells):
        u = lo_u + (i + 0.5) * du
        in_a_u, in_b_u = a[0] <= u <= a[2], b[0] <= u <= b[2]
        for j in range(cells):
            v = lo_v + (j + 0.5) * dv
            ina = in_a_u and a[1] <= v <= a[3]
            inb = in_b_u and b[1] <= v <= b[3]
            inter += ina and inb
            union += ina or inb
    return inter / union if union else 0.0


class ExhaustiveMap:
    """Straight transcription of the class-selection update with a full scan.

    ``records`` holds dicts; ids are list positions.
    """

    def __init__(self, intr, iou_threshold=0.9, k=3, policy="objectness"):
        self.intr = intr
        self.iou_threshold = iou_threshold
        self.k = k
        self.policy = policy
        self.records = []

    def insert(self, rec):
        self.records.append(dict(rec))
        return len(self.records) - 1

    def _box(self, rec, rows, t):
        i = self.intr
        return box_in_view(rec["position"], rec["extent"][0], rec["extent"][1], rows, t,
                           i.fx, i.fy, i.cx, i.cy, float(i.width), float(i.height))

    def nearest(self, q, k):
        order = sorted(range(len(self.records)),
                       key=lambda i: (math.sqrt(sum((a - b) ** 2 for a, b in zip(self.records[i]["position"], q))), i))
        return order[:k]

    def _better(self, new, old):
        if self.policy == "objectness":
            return new["objectness"] > old["objectness"]
        if self.policy == "max_probability":
            return new["probability"] > old["probability"]
        return True

    def update(self, rec, rows, t):
        if not self.records:
            return ("inserted", self.insert(rec))
        new_box = self._box(rec, rows, t)
        best, best_iou = None, None
        if new_box is not None:
            for rid in self.nearest(rec["position"], self.k):
                box = self._box(self.records[rid], rows, t)
                val = 0.0 if box is None else iou(new_box, box)
                if val > self.iou_threshold and (best is None or val > best_iou):
                    best, best_iou = rid, val
        if best is None:
            return ("inserted", self.insert(rec))
        if self._better(rec, self.records[best]):
            self.records[best] = dict(rec)
            return ("replaced", best)
        return ("discarded", best)


def as_oracle(rec):
    return {"class": rec.class_obs.class_id, "probability": rec.class_obs.probability,
            "objectness": rec.objectness, "position": list(rec.position),
            "extent": [rec.extent.width_m, rec.extent.height_m],
            "observed_depth": rec.observed_depth, "frame_index": rec.frame_index}


def serialise_store(records):
    """Canonical text for a package snapshot, matching :func:`serialise_oracle`."""
    return json.dumps([dict(id=r.id, **as_oracle(r)) for r in records], sort_keys=True)


def serialise_oracle(records):
    return json.dumps([dict(id=i, **r) for i, r in enumerate(records)], sort_keys=True)
