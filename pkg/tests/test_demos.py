"""Demo recording, labels, pair extraction, persistence, and failure harvest."""

import math
from types import SimpleNamespace

import numpy as np
import pytest

from twinsim.demos import (
    DemoError,
    DemoFormatError,
    DemoSet,
    Demonstration,
    Frame,
    RenderedPairDataset,
    frame_world,
    harvest_failures,
    label_progress,
    load_demo,
    make_training_pairs,
    merge_datasets,
    record,
    save_demo,
    state_observation,
    state_training_arrays,
)
from twinsim.physics import engine, scene
from twinsim.render import render, scene_cameras

DT = 1.0 / 60.0


@pytest.fixture(scope="module")
def stream():
    w = scene.build_scene()
    w = engine.set_joint_target(w, [-0.12, -0.10])
    states = [w]
    for _ in range(70):
        w = engine.step(w)
        states.append(w)
    return states


@pytest.fixture(scope="module")
def demo(stream):
    return record(stream, source="scripted")


@pytest.fixture(scope="module")
def labeled(demo):
    return label_progress(demo)


def _affine_demo(n=40, slope=(0.3, 0.5)):
    # joint values affine in time, so interpolation oracles are exact
    a = np.array([0.1, -0.2])
    b = np.array(slope)
    frames = []
    for i in range(n):
        t = i * DT
        frames.append(
            Frame(
                t=t,
                q=a + b * t,
                qdot=b.copy(),
                poses={"tblock": (np.array([0.01, 0.02, 0.01]),
                                  np.array([1.0, 0.0, 0.0, 0.0]))},
                velocities={"tblock": (np.zeros(3), np.zeros(3))},
            )
        )
    return Demonstration(scene_digest="f" * 16, dt=DT, d=2,
                         object_ids=("tblock",), source="scripted",
                         frames=frames)


def test_record_counts_and_header(stream, demo):
    assert len(demo) == len(stream)
    assert demo.scene_digest == stream[0].model.config_digest
    assert demo.d == 2
    assert demo.object_ids == ("tblock",)
    assert demo.source == "scripted"
    assert demo.dt == stream[0].model.dt


def test_record_is_lossless(stream, demo):
    for w, f in zip(stream, demo.frames):
        assert f.t == w.time
        assert np.array_equal(f.q, w.joint_q)
        assert np.array_equal(f.qdot, w.joint_qdot)
        bi = w.body_index("tblock")
        p, quat = f.poses["tblock"]
        v, om = f.velocities["tblock"]
        assert np.array_equal(p, w.pos[bi])
        assert np.array_equal(quat, w.quat[bi])
        assert np.array_equal(v, w.vel[bi])
        assert np.array_equal(om, w.omega[bi])
    assert demo.frames[0].progress == 0.0


def test_record_rejects_empty_stream():
    with pytest.raises(DemoError, match="empty"):
        record([])


def test_record_names_dt_gap_frame(stream):
    sub = [w.copy() for w in stream[:8]]
    sub[4].time += 0.2 * DT
    with pytest.raises(DemoError, match="dt drift at frame 4"):
        record(sub)


def test_record_rejects_scene_change_and_bad_source(stream):
    other = scene.build_scene({"tblock": {"mass": 0.4}})
    mixed = list(stream[:3]) + [other]
    with pytest.raises(DemoError, match="scene changed"):
        record(mixed)
    with pytest.raises(DemoError, match="source"):
        record(stream[:3], source="guesswork")


def test_label_endpoints_exact(labeled):
    prog = labeled.progress
    assert prog[0] == 0.0
    assert prog[-1] == 1.0
    assert np.all(np.diff(prog) > 0.0)
    assert labeled.is_labeled


def test_label_midpoint():
    demo = label_progress(_affine_demo(n=121))
    assert demo.frames[60].progress == pytest.approx(0.5, abs=1e-12)


def test_label_needs_two_frames():
    demo = _affine_demo(n=1)
    with pytest.raises(DemoError, match="fewer than 2"):
        label_progress(demo)


def test_pair_count_shape_and_key(labeled):
    pairs = make_training_pairs(labeled, demo_key="run7")
    assert len(pairs) == len(labeled)
    assert all(p.target.shape == (32, 3) for p in pairs)
    assert all(p.demo_key == "run7" for p in pairs)
    assert pairs[5].frame is labeled.frames[5]


def test_pairs_match_interp_oracle():
    demo = label_progress(_affine_demo(n=40))
    m = 32
    pairs = make_training_pairs(demo, horizon=1.0, m=m)
    n = len(demo)
    grid = np.arange(n, dtype=float)
    q = np.stack([f.q for f in demo.frames])
    prog = demo.progress
    step_frames = 1.0 / (m * DT)
    for i, pair in enumerate(pairs):
        f = i + (np.arange(m) + 1.0) * step_frames
        want = np.column_stack(
            [np.interp(f, grid, q[:, 0]), np.interp(f, grid, q[:, 1]),
             np.interp(f, grid, prog)]
        )
        np.testing.assert_allclose(pair.target, want, rtol=0.0, atol=1e-12)


def test_final_frame_pair_is_terminal_padding(labeled):
    pairs = make_training_pairs(labeled)
    last = labeled.frames[-1]
    want = np.concatenate([last.q, [1.0]])
    assert np.array_equal(pairs[-1].target, np.tile(want, (32, 1)))


def test_pairs_require_labels():
    demo = _affine_demo(n=10)
    with pytest.raises(DemoError, match="label the demo"):
        make_training_pairs(demo)


def test_pair_stride(labeled):
    pairs = make_training_pairs(labeled, stride=3)
    assert len(pairs) == len(range(0, len(labeled), 3))
    assert pairs[1].frame is labeled.frames[3]


def test_demo_shorter_than_horizon_pads():
    demo = label_progress(_affine_demo(n=2))
    pairs = make_training_pairs(demo)
    want = np.concatenate([demo.frames[1].q, [1.0]])
    assert len(pairs) == 2
    assert np.array_equal(pairs[0].target, np.tile(want, (32, 1)))


def test_save_load_is_a_fixed_point(labeled, tmp_path):
    f1 = tmp_path / "a.demo"
    f2 = tmp_path / "b.demo"
    f3 = tmp_path / "c.demo"
    save_demo(labeled, f1)
    d2 = load_demo(f1)
    save_demo(d2, f2)
    d3 = load_demo(f2)
    assert d2.equals(d3)
    save_demo(d3, f3)
    assert f2.read_bytes() == f3.read_bytes()
    assert d2.scene_digest == labeled.scene_digest
    assert d2.source == labeled.source
    assert len(d2) == len(labeled)
    # 9 significant digits of quantization on the way to disk
    np.testing.assert_allclose(d2.frames[9].q, labeled.frames[9].q,
                               rtol=1e-8, atol=1e-12)


def test_tampered_line_is_named(labeled, tmp_path):
    path = tmp_path / "demo.txt"
    save_demo(labeled, path)
    lines = path.read_text().splitlines()
    toks = lines[4].split(" ")
    toks[2] = "xx"
    broken = tmp_path / "bad_token.txt"
    broken.write_text("\n".join(lines[:4] + [" ".join(toks)] + lines[5:]) + "\n")
    with pytest.raises(DemoFormatError, match="line 5"):
        load_demo(broken)
    short = tmp_path / "short_line.txt"
    short.write_text("\n".join(lines[:4] + [" ".join(toks[:-1])] + lines[5:]) + "\n")
    with pytest.raises(DemoFormatError, match="line 5"):
        load_demo(short)


def test_loaded_time_grid_checked(labeled, tmp_path):
    path = tmp_path / "demo.txt"
    save_demo(labeled, path)
    lines = path.read_text().splitlines()
    toks = lines[6].split(" ")
    toks[0] = f"{float(toks[0]) + 0.4 * DT:.9g}"
    lines[6] = " ".join(toks)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DemoFormatError, match="line 7.*grid"):
        load_demo(path)


def test_header_only_file(labeled, tmp_path):
    path = tmp_path / "demo.txt"
    save_demo(labeled, path)
    head = path.read_text().splitlines()[0]
    path.write_text(head + "\n")
    with pytest.raises(DemoError, match="zero frames"):
        load_demo(path)


def test_schema_version_mismatch(labeled, tmp_path):
    path = tmp_path / "demo.txt"
    save_demo(labeled, path)
    lines = path.read_text().splitlines()
    head = lines[0].split(" ")
    head[1] = "2"
    lines[0] = " ".join(head)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DemoFormatError, match="schema version 2"):
        load_demo(path)


def test_bad_header(tmp_path):
    path = tmp_path / "demo.txt"
    path.write_text("not a demo at all\n")
    with pytest.raises(DemoFormatError, match="line 1"):
        load_demo(path)
    path.write_text("")
    with pytest.raises(DemoFormatError, match="line 1"):
        load_demo(path)


def test_digest_check_on_load(labeled, tmp_path):
    path = tmp_path / "demo.txt"
    save_demo(labeled, path)
    assert load_demo(path, expect_digest=labeled.scene_digest).equals(
        load_demo(path))
    with pytest.raises(DemoError, match="digest"):
        load_demo(path, expect_digest="0" * 16)


def _episode(world, success, stall):
    return SimpleNamespace(success=success, terminal_state=world,
                           stall_time=stall)


def test_harvest_empty_when_all_succeed(stream):
    eps = [_episode(stream[0], True, 0.0) for _ in range(4)]
    assert harvest_failures(eps) == []


def test_harvest_dedups_and_orders_by_stall(stream):
    base = stream[0]
    near_a = scene.set_tblock_pose(base, 0.050, 0.000, 0.30)
    near_b = scene.set_tblock_pose(base, 0.052, 0.001, 0.33)
    far = scene.set_tblock_pose(base, 0.150, 0.100, -0.50)
    eps = [
        _episode(near_a, False, 3.0),
        _episode(far, False, 1.0),
        _episode(near_b, False, 5.0),
        _episode(base, True, 0.0),
        SimpleNamespace(success=False, terminal_state=None, stall_time=9.0),
    ]
    kept = harvest_failures(eps)
    assert len(kept) == 2
    # longest stall first; the 3.0 s state collapses into the 5.0 s one
    bi = kept[0].body_index("tblock")
    assert np.allclose(kept[0].pos[bi][:2], [0.052, 0.001])
    bi = kept[1].body_index("tblock")
    assert np.allclose(kept[1].pos[bi][:2], [0.150, 0.100])
    report = SimpleNamespace(episodes=eps)
    assert len(harvest_failures(report)) == 2


def test_harvest_requires_both_bounds_for_duplicates(stream):
    base = stream[0]
    a = scene.set_tblock_pose(base, 0.00, 0.00, 0.0)
    shifted = scene.set_tblock_pose(base, 0.03, 0.00, 0.0)
    twisted = scene.set_tblock_pose(base, 0.01, 0.00, math.radians(30.0))
    assert len(harvest_failures([_episode(a, False, 2.0),
                                 _episode(shifted, False, 1.0)])) == 2
    assert len(harvest_failures([_episode(a, False, 2.0),
                                 _episode(twisted, False, 1.0)])) == 2
    dup = scene.set_tblock_pose(base, 0.01, 0.00, math.radians(5.0))
    assert len(harvest_failures([_episode(a, False, 2.0),
                                 _episode(dup, False, 1.0)])) == 1


def test_demoset_pairs_carry_provenance(labeled):
    other = label_progress(
        Demonstration(labeled.scene_digest, labeled.dt, labeled.d,
                      labeled.object_ids, "teleop", list(labeled.frames[:40]))
    )
    ds = DemoSet([labeled, other])
    pairs = ds.training_pairs()
    assert len(ds) == 2
    assert len(pairs) == len(labeled) + 40
    keys = {p.demo_key for p in pairs}
    assert keys == {"demo000", "demo001"}


def test_merge_concats_and_validates(labeled):
    ds = DemoSet([labeled], labels=("left",))
    merged = merge_datasets([ds, DemoSet([labeled], labels=("right",))])
    assert len(merged) == 2
    assert merged.labels == ("left", "right")
    assert len(merged.training_pairs()) == 2 * len(make_training_pairs(labeled))
    double = merge_datasets([ds, ds])
    assert len(double.training_pairs()) == 2 * len(ds.training_pairs())
    alien = _affine_demo(n=5)
    with pytest.raises(DemoError, match="digest"):
        merge_datasets([ds, DemoSet([alien])])
    with pytest.raises(DemoError, match="nothing to merge"):
        merge_datasets([])


def test_frame_world_reconstructs_links(stream, labeled):
    base = stream[0]
    i = 40
    w = frame_world(labeled.frames[i], base)
    orig = stream[i]
    assert w.time == orig.time
    bt = w.body_index("tblock")
    assert np.array_equal(w.pos[bt], orig.pos[bt])
    assert np.array_equal(w.quat[bt], orig.quat[bt])
    # links sit exactly on the joint manifold; the original carries the
    # solver residual, so agreement is at that scale, not bitwise
    for link in ("carriage", "pusher"):
        bi = w.body_index(link)
        np.testing.assert_allclose(w.pos[bi], orig.pos[bi], atol=2e-4)
    assert np.all(w.fric_flag == 0)
    assert w.max_penetration == 0.0


def test_frame_world_renders_like_the_original(stream, labeled):
    cam = scene_cameras(stream[0].model)["overhead"]
    orig = render(stream[40], cam).to_array()
    rebuilt = render(frame_world(labeled.frames[40], stream[0]), cam).to_array()
    same = np.mean(orig == rebuilt)
    assert same > 0.99


def test_frame_world_rejects_joint_mismatch(stream):
    f = _affine_demo(n=3).frames[0]
    bad = Frame(t=f.t, q=np.zeros(3), qdot=np.zeros(3), poses=f.poses,
                velocities=f.velocities)
    with pytest.raises(DemoError, match="joints"):
        frame_world(bad, stream[0])


def test_state_observation_layout(labeled):
    f = labeled.frames[10]
    obs = state_observation(f)
    p, quat = f.poses["tblock"]
    assert obs.shape == (9,)
    assert np.array_equal(obs, np.concatenate([f.q, p, quat]))


def test_state_training_arrays(labeled):
    pairs = make_training_pairs(labeled, stride=5)
    obs, targets = state_training_arrays(pairs)
    assert obs.shape == (len(pairs), 9)
    assert targets.shape == (len(pairs), 96)
    assert np.array_equal(obs[2], state_observation(pairs[2].frame))
    assert np.array_equal(targets[2], pairs[2].target.ravel())
    with pytest.raises(DemoError, match="no training pairs"):
        state_training_arrays([])


def test_rendered_pair_dataset_caches(stream, labeled):
    cam = scene_cameras(stream[0].model)["overhead"]
    pairs = make_training_pairs(labeled, stride=12)[:6]
    ds = RenderedPairDataset(pairs, stream[0], cam)
    assert len(ds) == 6
    (q, images), targets = ds.get_batch(np.array([0, 1]))
    assert q.shape == (2, 2)
    assert images.shape == (2, 3, 64, 64)
    assert targets.shape == (2, 96)
    assert images.min() >= 0.0 and images.max() <= 1.0
    assert ds.rendered == 2
    ds.get_batch(np.array([0, 1]))
    assert ds.rendered == 2
    ds.get_batch(np.array([2]))
    assert ds.rendered == 3
