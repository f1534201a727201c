import io
import json
from pathlib import Path

import pytest

from objmap import ObjectStore, process_frames
from objmap.cli import main
from objmap.config import ConfigError, RunConfig, load_config
from objmap.formats import (LogFormatError, parse_frame_line, read_detection_log, read_snapshot, write_detection_log,
                            write_snapshot)
from objmap.pipeline import RejectedDetection
from objmap.sim import DEFAULT_INTRINSICS

DATA = Path(__file__).parent / "data"


def small_config(tmp_path, **extra):
    cfg = {"start_distance": 3.0, "end_distance": 1.0, "step": 0.5, "bench_store_sizes": [0, 200],
           "bench_detections": [1, 5], "bench_frames": 9, **extra}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def read_dir(path, skip=("timing_",)):
    return {p.name: p.read_bytes() for p in sorted(Path(path).iterdir()) if not p.name.startswith(skip)}


def test_run_sim_outputs_and_determinism(tmp_path, capsys):
    cfg = small_config(tmp_path)
    assert main(["run-sim", "--config", cfg, "--seed", "7", "--out", str(tmp_path / "a")]) == 0
    assert main(["run-sim", "--config", cfg, "--seed", "7", "--out", str(tmp_path / "b")]) == 0
    a = read_dir(tmp_path / "a")
    assert a == read_dir(tmp_path / "b")
    assert sorted(n for n in a if n.startswith("metrics_")) == ["metrics_angle-45.csv", "metrics_angle0.csv",
                                                               "metrics_angle45.csv"]
    header = a["metrics_angle0.csv"].decode().splitlines()[0]
    assert header == "frame,distance,emitted_class,maintained_class,objectness"
    assert (tmp_path / "a" / "timing_angle0.csv").exists()


def test_noiseless_angles_share_final_classes(tmp_path):
    cfg = small_config(tmp_path, noiseless=True)
    assert main(["run-sim", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "summary.csv").read_text().splitlines()[1:]
    assert len(rows) == 3 and {r.split(",")[2] for r in rows} == {"chair"}


@pytest.mark.parametrize("argv, key", [
    (["--alpha", "1.5"], "alpha"),
    (["--iou-threshold", "-0.2"], "iou_threshold"),
    (["--k", "0"], "k"),
])
def test_invalid_flags_exit_nonzero(argv, key, capsys, tmp_path):
    assert main(["run-sim", *argv, "--out", str(tmp_path)]) != 0
    assert key in capsys.readouterr().err


def test_invalid_config_file(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"alpha": 0.4, "colour": "red"}))
    assert main(["run-sim", "--config", str(path)]) == 2
    assert "colour" in capsys.readouterr().err
    path.write_text("{not json")
    assert main(["run-sim", "--config", str(path)]) == 2


def test_config_overrides_and_defaults():
    cfg = load_config(alpha=0.25, k=None)
    assert (cfg.alpha, cfg.k, cfg.d_min, cfg.d_max, cfg.iou_threshold) == (0.25, 3, 0.8, 3.0, 0.9)
    with pytest.raises(ConfigError, match="d_max"):
        RunConfig(d_min=2.0, d_max=1.0).validate()


def test_replay_empty_log(tmp_path, capsys):
    log = tmp_path / "empty.jsonl"
    log.write_text("")
    assert main(["replay", str(log), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "snapshot.jsonl").read_text() == ""
    assert "records=0" in capsys.readouterr().out


def test_replay_approach_log(tmp_path):
    assert main(["replay", str(DATA / "approach_log.jsonl"), "--out", str(tmp_path)]) == 0
    with open(tmp_path / "snapshot.jsonl") as fh:
        (rec,) = read_snapshot(fh)
    assert rec.class_id == "chair" and abs(rec.objectness - 0.8896) <= 1e-12


def test_replay_of_sim_emission(tmp_path, capsys):
    cfg = small_config(tmp_path, n_objects=3)
    sim_dir, rep_dir = tmp_path / "sim", tmp_path / "rep"
    assert main(["run-sim", "--config", cfg, "--seed", "2", "--out", str(sim_dir)]) == 0
    for angle in ("-45", "0", "45"):
        capsys.readouterr()
        assert main(["replay", str(sim_dir / f"detections_angle{angle}.jsonl"), "--config", cfg,
                     "--out", str(rep_dir)]) == 0
        assert "skipped=0" in capsys.readouterr().out
        assert (rep_dir / "snapshot.jsonl").read_bytes() == (sim_dir / f"snapshot_angle{angle}.jsonl").read_bytes()


def test_replay_parse_error_reports_line(tmp_path, capsys):
    lines = (DATA / "approach_log.jsonl").read_text().splitlines()
    lines[1] = lines[1][:40]
    log = tmp_path / "bad.jsonl"
    log.write_text("\n".join(lines) + "\n")
    assert main(["replay", str(log)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_replay_missing_file(tmp_path, capsys):
    assert main(["replay", str(tmp_path / "nope.jsonl")]) == 2


def test_replay_counts_bad_detections(tmp_path, capsys):
    raw = json.loads((DATA / "approach_log.jsonl").read_text().splitlines()[0])
    raw["detections"].append({"bbox": [1, 2, 3], "class": "tv", "probability": 0.5, "mean_depth": 1.0})
    raw["detections"].append({"bbox": [1, 2, 3, 4], "class": "tv", "probability": 0.5, "mean_depth": -1.0})
    log = tmp_path / "log.jsonl"
    log.write_text(json.dumps(raw) + "\n")
    assert main(["replay", str(log), "--out", str(tmp_path)]) == 0
    assert "detections=3 skipped=2 records=1" in capsys.readouterr().out


@pytest.mark.parametrize("line, msg", [
    ("[1, 2]", "JSON object"),
    ('{"frame": 0}', "pose"),
    ('{"frame": "a", "pose": {"q": [1, 0, 0, 0], "t": [0, 0, 0]}}', "frame"),
    ('{"frame": 0, "pose": {"q": [1, 0, 0], "t": [0, 0, 0]}}', "pose.q"),
    ('{"frame": 0, "pose": {"q": [1, 0, 0, 0], "t": [0, 0, 0]}, "detections": 3}', "detections"),
])
def test_parse_errors(line, msg):
    with pytest.raises(LogFormatError, match=msg) as err:
        parse_frame_line(line, 5)
    assert err.value.line_no == 5 and str(err.value).startswith("line 5:")


def test_frames_out_of_order():
    line = (DATA / "approach_log.jsonl").read_text().splitlines()[0]
    with pytest.raises(LogFormatError, match="line 2"):
        read_detection_log(io.StringIO(line + "\n" + line + "\n"))


def test_bad_detection_becomes_rejected():
    frame = parse_frame_line('{"frame": 0, "pose": {"q": [1, 0, 0, 0], "t": [0, 0, 0]}, '
                             '"detections": [{"bbox": [0, 0, 1, 1], "class": "", "probability": 0.5, "mean_depth": 1}]}')
    (d,) = frame.detections
    assert isinstance(d, RejectedDetection) and "class" in d.reason


def test_log_and_snapshot_round_trip():
    with open(DATA / "approach_log.jsonl") as fh:
        text = fh.read()
    frames = read_detection_log(io.StringIO(text))
    out = io.StringIO()
    write_detection_log(frames, out)
    assert read_detection_log(io.StringIO(out.getvalue())) == frames
    store = ObjectStore()
    process_frames(store, frames, DEFAULT_INTRINSICS)
    buf = io.StringIO()
    write_snapshot(store.snapshot(), buf)
    assert tuple(read_snapshot(io.StringIO(buf.getvalue()))) == store.snapshot()


def test_bench_reports(tmp_path, capsys):
    cfg = small_config(tmp_path)
    assert main(["bench", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = [r.split(",") for r in (tmp_path / "bench.csv").read_text().splitlines()[1:]]
    assert len(rows) == 4
    lat = {(int(r[0]), int(r[1])): float(r[3]) for r in rows}
    assert 0 < lat[(0, 1)] < min(v for k, v in lat.items() if k != (0, 1))
    assert "identical outcomes=True" in capsys.readouterr().out
