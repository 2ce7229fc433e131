import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np

from lane3d.cli import main
from lane3d.model import read_scenes, write_scenes

CONFIGS = "configs"


def run(args):
    return main([str(a) for a in args])


def test_generate_zero_count(tmp_path):
    out = tmp_path / "scenes.jsonl"
    assert run(["generate", "--count", 0, "--out", out]) == 0
    assert out.read_bytes() == b""


def test_generate_deterministic(tmp_path):
    a = tmp_path / "a.jsonl"
    b = tmp_path / "b.jsonl"
    assert run(["generate", "--count", 10, "--seed", 5, "--out", a]) == 0
    assert run(["generate", "--count", 10, "--seed", 5, "--out", b]) == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.jsonl"
    assert run(["generate", "--count", 10, "--seed", 6, "--out", c]) == 0
    assert a.read_bytes() != c.read_bytes()


def test_generate_scenes_validate_on_reload(tmp_path):
    out = tmp_path / "scenes.jsonl"
    assert run(["generate", "--count", 100, "--seed", 1, "--out", out]) == 0
    scenes = read_scenes(out)
    assert len(scenes) == 100
    assert all(len(s.lanes) == 2 for s in scenes)


def test_augment_zero_probabilities_identity(tmp_path):
    src = tmp_path / "src.jsonl"
    dst = tmp_path / "dst.jsonl"
    run(["generate", "--count", 5, "--seed", 2, "--out", src])
    cfg = tmp_path / "zero.json"
    cfg.write_text(json.dumps({"p_pitch": 0.0, "p_roll": 0.0, "p_yaw": 0.0}))
    assert run(["augment", "--in", src, "--config", cfg, "--out", dst]) == 0
    assert src.read_bytes() == dst.read_bytes()


def test_augment_fixed_pitch_changes_heights(tmp_path):
    src = tmp_path / "src.jsonl"
    dst = tmp_path / "dst.jsonl"
    run(["generate", "--count", 3, "--seed", 3, "--out", src])
    cfg = tmp_path / "pitch.json"
    cfg.write_text(json.dumps({
        "pitch_range": [0.05, 0.05], "p_pitch": 1.0, "p_roll": 0.0, "p_yaw": 0.0,
        "angle_unit": "radians"}))
    assert run(["augment", "--in", src, "--config", cfg, "--out", dst]) == 0
    from lane3d.augment import rot_x
    r = rot_x(0.05)
    for before, after in zip(read_scenes(src), read_scenes(dst)):
        for lb, la in zip(before.lanes, after.lanes):
            assert np.allclose(la.points, lb.points @ r.T, atol=1e-12)
        assert after.metadata["augment_pitch_rad"] == repr(0.05)


def test_augment_deterministic(tmp_path):
    src = tmp_path / "src.jsonl"
    run(["generate", "--count", 5, "--seed", 4, "--out", src])
    outs = []
    for name in ("a.jsonl", "b.jsonl"):
        dst = tmp_path / name
        assert run(["augment", "--in", src, "--config",
                    f"{CONFIGS}/augment_default.json", "--seed", 9, "--out", dst]) == 0
        outs.append(dst.read_bytes())
    assert outs[0] == outs[1]


def test_project_then_reconstruct_flat(tmp_path):
    scenes = tmp_path / "scenes.jsonl"
    flat = tmp_path / "flat.jsonl"
    rec = tmp_path / "rec.jsonl"
    cfg = tmp_path / "gen.json"
    cfg.write_text(json.dumps({"flat_fraction": 1.0}))
    run(["generate", "--count", 3, "--seed", 5, "--config", cfg, "--out", scenes])
    assert run(["project", "--in", scenes, "--out", flat]) == 0
    assert run(["reconstruct", "--in", flat, "--out", rec]) == 0
    for scene in read_scenes(rec):
        for lane in scene.lanes:
            assert np.max(np.abs(lane.points[:, 2])) < 1e-6
        assert all(v == "ok" for k, v in scene.metadata.items()
                   if k.startswith("solver_status:"))


def test_reconstruct_single_boundary_status(tmp_path, simple_scene, pose):
    from lane3d.model import Scene
    scenes = tmp_path / "one.jsonl"
    flat = tmp_path / "flat.jsonl"
    rec = tmp_path / "rec.jsonl"
    single = Scene(frame_id="solo", camera=pose, lanes=[simple_scene.lanes[0]])
    write_scenes([single], scenes)
    run(["project", "--in", scenes, "--out", flat])
    assert run(["reconstruct", "--in", flat, "--out", rec]) == 0
    out = read_scenes(rec)[0]
    assert out.metadata["solver_status:left"] == "no_pairing"
    assert out.lanes == []


def test_reconstruct_trace_csv(tmp_path):
    scenes = tmp_path / "scenes.jsonl"
    flat = tmp_path / "flat.jsonl"
    rec = tmp_path / "rec.jsonl"
    run(["generate", "--count", 2, "--seed", 13, "--out", scenes])
    run(["project", "--in", scenes, "--out", flat])
    cfg = tmp_path / "solve.json"
    cfg.write_text(json.dumps({"trace_dir": str(tmp_path / "traces")}))
    assert run(["reconstruct", "--in", flat, "--config", cfg, "--out", rec]) == 0
    traces = sorted((tmp_path / "traces").glob("*.csv"))
    assert len(traces) == 2
    header, first = traces[0].read_text().splitlines()[:2]
    assert header == "iter,J,step"
    assert first.startswith("0,")


def test_evaluate_gt_vs_gt(tmp_path):
    scenes = tmp_path / "scenes.jsonl"
    report = tmp_path / "report.json"
    run(["generate", "--count", 4, "--seed", 6, "--out", scenes])
    assert run(["evaluate", scenes, scenes, "--out", report]) == 0
    doc = json.loads(report.read_text())
    assert doc["f_score"] == 1.0
    assert doc["ap"] == 1.0
    assert doc["x_err_far"] == 0.0 and doc["z_err_far"] == 0.0


def test_evaluate_joint_with_identical_method(tmp_path):
    scenes = tmp_path / "scenes.jsonl"
    report = tmp_path / "report.json"
    run(["generate", "--count", 3, "--seed", 7, "--out", scenes])
    assert run(["evaluate", scenes, scenes, "--joint", scenes, "--out", report]) == 0
    doc = json.loads(report.read_text())
    assert "joint" in doc and len(doc["joint"]) == 2
    for entry in doc["joint"]:
        assert entry["x_far"] == doc["x_err_far"]
        assert not entry["empty_intersection"]


def test_evaluate_frame_mismatch_exit_2(tmp_path, capsys):
    a = tmp_path / "a.jsonl"
    b = tmp_path / "b.jsonl"
    run(["generate", "--count", 3, "--seed", 8, "--out", a])
    write_scenes(read_scenes(a)[:2], b)
    report = tmp_path / "report.json"
    assert run(["evaluate", a, b, "--out", report]) == 2
    assert "synth_8_00002" in capsys.readouterr().err


def test_plot_empty_scene_list(tmp_path):
    scenes = tmp_path / "scenes.jsonl"
    scenes.write_text("")
    out_dir = tmp_path / "figs"
    assert run(["plot", "--in", scenes, "--out", out_dir]) == 0
    assert list(out_dir.glob("*.svg")) == []


def test_plot_scene_svg_well_formed(tmp_path):
    scenes = tmp_path / "scenes.jsonl"
    run(["generate", "--count", 1, "--seed", 9, "--out", scenes])
    out_dir = tmp_path / "figs"
    assert run(["plot", "--in", scenes, "--out", out_dir]) == 0
    files = list(out_dir.glob("*.svg"))
    assert len(files) == 1
    ET.parse(files[0])   # raises on malformed XML


def test_plot_overlay_two_series(tmp_path):
    scenes = tmp_path / "scenes.jsonl"
    run(["generate", "--count", 1, "--seed", 10, "--out", scenes])
    out_dir = tmp_path / "figs"
    assert run(["plot", "--in", scenes, "--pred", scenes, "--out", out_dir]) == 0
    tree = ET.parse(next(iter(out_dir.glob("*.svg"))))
    ns = "{http://www.w3.org/2000/svg}"
    classes = {el.get("class") for el in tree.iter(f"{ns}polyline")}
    assert {"series-gt", "series-pred"} <= classes
    colors = {el.get("stroke") for el in tree.iter(f"{ns}polyline")}
    assert len(colors) == 2


def test_plot_report_chart(tmp_path):
    scenes = tmp_path / "scenes.jsonl"
    report = tmp_path / "report.json"
    run(["generate", "--count", 2, "--seed", 11, "--out", scenes])
    run(["evaluate", scenes, scenes, "--out", report])
    out_dir = tmp_path / "figs"
    assert run(["plot", "--in", report, "--out", out_dir]) == 0
    ET.parse(out_dir / "report.svg")


def test_usage_error_exit_1():
    assert run(["generate", "--count", "not-a-number", "--out", "x"]) == 1
    assert run(["no-such-command"]) == 1


def test_missing_input_exit_3(tmp_path):
    assert run(["project", "--in", tmp_path / "absent.jsonl",
                "--out", tmp_path / "o.jsonl"]) == 3


def test_workers_preserve_order(tmp_path):
    scenes = tmp_path / "scenes.jsonl"
    run(["generate", "--count", 12, "--seed", 12, "--out", scenes])
    serial = tmp_path / "serial.jsonl"
    pooled = tmp_path / "pooled.jsonl"
    run(["project", "--in", scenes, "--out", serial])
    run(["project", "--in", scenes, "--out", pooled, "--workers", 4])
    assert serial.read_bytes() == pooled.read_bytes()


def test_console_entry_point(tmp_path):
    out = tmp_path / "scenes.jsonl"
    proc = subprocess.run([sys.executable, "-m", "lane3d.cli",
                           "generate", "--count", "1", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert out.exists()
