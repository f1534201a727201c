import threading

import numpy as np
import pytest

from objmap import (CameraPose, ClassObservation, MetricExtent, ObjectRecord, ObjectStore, OutcomeKind,
                    ScoreWeights)
from objmap.sim import DEFAULT_INTRINSICS as INTR

from oracles import ExhaustiveMap, as_oracle
from sequences import knn_store, run_case

IDENT = CameraPose.identity()
CHAIR = MetricExtent(0.5, 0.9)


def rec(label, p, depth, position=(0.0, 0.0, 3.0), extent=CHAIR, frame=0):
    return ObjectRecord.create(position, extent, ClassObservation(label, p), depth, frame)


def random_store(n, seed, **kw):
    rng = np.random.default_rng(seed)
    store = ObjectStore(**kw)
    for p in rng.uniform(-10, 10, size=(n, 3)):
        store.insert(rec("chair", 0.5, 2.0, position=p))
    return store, rng


def test_empty_store():
    store = ObjectStore()
    assert store.search_knn((0, 0, 0)) == []
    assert store.snapshot() == ()
    out = store.update_with_detection(rec("chair", 0.724, 3.0), IDENT, INTR)
    assert (out.kind, out.record_id) == (OutcomeKind.INSERTED, 0)
    assert len(store) == 1 and store.get(0).id == 0


def test_snapshot_after_one_insert():
    store = ObjectStore()
    r = rec("chair", 0.724, 3.0)
    store.insert(r)
    (only,) = store.snapshot()
    assert only.id == 0 and only.position == r.position and only.class_obs == r.class_obs


def test_k_exceeds_size():
    store = ObjectStore()
    store.insert(rec("a", 0.5, 2.0, position=(5, 0, 0)))
    store.insert(rec("b", 0.5, 2.0, position=(1, 0, 0)))
    assert [r.id for r in store.search_knn((0, 0, 0), k=3)] == [1, 0]


def test_knn_tie_breaks_by_id():
    store = ObjectStore(brute_force_below=0, index_buffer=0)
    for x in (1.0, -1.0, 1.0, 0.0, -1.0):
        store.insert(rec("a", 0.5, 2.0, position=(x, 0, 0)))
    assert [r.id for r in store.search_knn((0, 0, 0), k=4)] == [3, 0, 1, 2]


@pytest.mark.parametrize("search", ["knn", "exhaustive"])
@pytest.mark.parametrize("buffer", [None, 0, 7])
@pytest.mark.parametrize("seed", range(3))
def test_knn_matches_brute_force(search, buffer, seed):
    store, rng = random_store(100, seed, search=search, brute_force_below=0, index_buffer=buffer)
    oracle = ExhaustiveMap(INTR)
    for r in store.snapshot():
        oracle.insert(as_oracle(r))
    # move a few records so the buffer and dirty-tree paths both matter
    for rid in rng.choice(100, 10, replace=False):
        new = rec("chair", 0.9, 2.5, position=rng.uniform(-10, 10, 3))
        store._replace(int(rid), new)
        oracle.records[rid] = as_oracle(new)
    for q in rng.uniform(-12, 12, size=(50, 3)):
        for k in (1, 3, 8):
            assert [r.id for r in store.search_knn(q, k)] == oracle.nearest(q, k)


def test_confident_far_view_replaces():
    store = ObjectStore()
    store.insert(rec("traffic light", 0.973, 0.3))
    assert store.get(0).objectness == pytest.approx(0.3892, abs=1e-12)
    out = store.update_with_detection(rec("chair", 0.724, 3.0), IDENT, INTR)
    assert (out.kind, out.record_id) == (OutcomeKind.REPLACED, 0)
    assert len(store) == 1 and store.get(0).class_id == "chair" and store.get(0).id == 0


def test_close_mislabel_discarded():
    store = ObjectStore()
    store.insert(rec("chair", 0.724, 3.0))
    out = store.update_with_detection(rec("umbrella", 0.759, 0.3), IDENT, INTR)
    assert (out.kind, out.record_id) == (OutcomeKind.DISCARDED, 0)
    assert store.get(0).class_id == "chair" and store.get(0).objectness == pytest.approx(0.8896, abs=1e-12)


def test_far_detection_inserts():
    store = ObjectStore()
    store.insert(rec("chair", 0.724, 3.0))
    pose = CameraPose.look_at((0, 0, 0), (1, 0, 0))
    out = store.update_with_detection(rec("tv", 0.9, 3.0, position=(5, 0, 0)), pose, INTR)
    assert out.kind is OutcomeKind.INSERTED and len(store) == 2


def test_equal_score_keeps_existing():
    store = ObjectStore()
    store.insert(rec("chair", 0.7, 2.0))
    out = store.update_with_detection(rec("tv", 0.7, 2.0), IDENT, INTR)
    assert out.kind is OutcomeKind.DISCARDED and store.get(0).class_id == "chair"


def test_best_iou_neighbour_wins():
    store = ObjectStore(iou_threshold=0.5)
    store.insert(rec("a", 0.1, 1.0, position=(0.02, 0, 3)))
    store.insert(rec("b", 0.1, 1.0, position=(0.0, 0, 3)))
    store.insert(rec("c", 0.1, 1.0, position=(0.04, 0, 3)))
    out = store.update_with_detection(rec("new", 0.9, 3.0), IDENT, INTR)
    assert (out.kind, out.record_id) == (OutcomeKind.REPLACED, 1)
    assert [r.class_id for r in store.snapshot()] == ["a", "new", "c"]


def test_invisible_new_record_is_inserted():
    store = ObjectStore()
    store.insert(rec("chair", 0.724, 3.0))
    out = store.update_with_detection(rec("chair", 0.724, 3.0), CameraPose.look_at((0, 0, 5), (0, 0, 10), up=(0, 1, 0)), INTR)
    assert out.kind is OutcomeKind.INSERTED


@pytest.mark.parametrize("policy, label", [("objectness", "chair"), ("max_probability", "umbrella"),
                                           ("last_wins", "tv")])
def test_policies(policy, label):
    store = ObjectStore(policy=policy)
    for r in (rec("chair", 0.724, 3.0), rec("umbrella", 0.759, 0.3), rec("tv", 0.3, 0.3)):
        store.update_with_detection(r, IDENT, INTR)
    assert [r.class_id for r in store.snapshot()] == [label]


def test_rejects_foreign_scores():
    store = ObjectStore(weights=ScoreWeights(0.9))
    with pytest.raises(ValueError, match="objectness"):
        store.update_with_detection(rec("chair", 0.724, 3.0), IDENT, INTR)


@pytest.mark.parametrize("kw", [dict(k=0), dict(iou_threshold=1.5), dict(policy="best"), dict(search="grid")])
def test_config_validation(kw):
    with pytest.raises(ValueError, match=next(iter(kw))):
        ObjectStore(**kw)


def test_dominated_updates_are_idempotent():
    store = ObjectStore()
    store.update_with_detection(rec("chair", 0.724, 3.0), IDENT, INTR)
    before = store.snapshot()
    for _ in range(5):
        assert store.update_with_detection(rec("umbrella", 0.759, 0.3), IDENT, INTR).kind is OutcomeKind.DISCARDED
    assert store.snapshot() == before


@pytest.mark.parametrize("seed", range(200))
def test_small_store_oracle(seed):
    got, want, snap, oracle_snap = run_case(seed, knn_store(seed))
    assert got == want and snap == oracle_snap


def _lifted_batch(store, rng, n):
    pose = CameraPose.look_at((0, -12, 1), (0, 0, 1))
    out = []
    snap = store.snapshot()
    for i in range(n):
        if i % 2 and snap:
            base = snap[int(rng.integers(len(snap)))]
            pos = np.add(base.position, rng.normal(0, 0.01, 3))
        else:
            pos = rng.uniform(-10, 10, 3)
        out.append(rec("chair", float(rng.uniform()), float(rng.uniform(0.5, 4)), position=pos, extent=MetricExtent(0.6, 0.6)))
    return pose, out


@pytest.mark.parametrize("seed", range(3))
def test_update_many_matches_sequential(seed):
    a, rng = random_store(400, seed, brute_force_below=0)
    b, _ = random_store(400, seed, search="exhaustive")
    c, _ = random_store(400, seed)
    for _ in range(5):
        pose, batch = _lifted_batch(a, rng, 40)
        many = a.update_many(batch, pose, INTR)
        one = [b.update_with_detection(r, pose, INTR) for r in batch]
        assert many == one == c.update_many(batch, pose, INTR)
    assert a.snapshot() == b.snapshot() == c.snapshot()


def test_determinism():
    def run():
        store, rng = random_store(200, 9)
        pose, batch = _lifted_batch(store, rng, 60)
        return store.update_many(batch, pose, INTR), store.snapshot()
    assert run() == run()


def test_snapshot_during_updates():
    store, rng = random_store(300, 1)
    stop = threading.Event()
    sizes = []

    def reader():
        while not stop.is_set():
            snap = store.snapshot()
            assert [r.id for r in snap] == list(range(len(snap)))
            sizes.append(len(snap))

    t = threading.Thread(target=reader)
    t.start()
    for _ in range(10):
        pose, batch = _lifted_batch(store, rng, 30)
        store.update_many(batch, pose, INTR)
    stop.set()
    t.join()
    assert sizes == sorted(sizes)
