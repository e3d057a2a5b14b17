"""Demonstration recording, labeling, pair extraction, and persistence.

A demonstration is the 60 Hz time series of everything that moves: robot
joint positions and the pose/velocity of each free object. Static scene
parameters live behind the scene config digest in the header. Files are
UTF-8 text, one record per line, numbers at 9 significant digits; parsing
a file and writing it back reproduces it byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .mathutils import se2_error
from .physics.state import Pose

SCHEMA_VERSION = 1
MAGIC_TOKEN = "twindemo"
SOURCES = ("online", "offline", "scripted", "teleop")
DEFAULT_HORIZON = 1.0
DEFAULT_WAYPOINTS = 32

# failure dedup: two terminal block poses within both bounds count as one
DEDUP_POS = 0.02
DEDUP_YAW = math.radians(15.0)


class DemoError(Exception):
    """Raised for malformed recordings, labels, or dataset combinations."""


class DemoFormatError(DemoError):
    """Raised when a demo file cannot be parsed; names the offending line."""


@dataclass
class Frame:
    """One captured tick: joint state plus every free object's motion state.

    Poses are stored as raw (position, quaternion) arrays rather than Pose
    objects so serialization does not renormalize and stays bit-stable.
    """

    t: float
    q: np.ndarray
    qdot: np.ndarray
    poses: dict  # object id -> (p (3,), quat (4,) wxyz)
    velocities: dict  # object id -> (v (3,), w (3,))
    progress: float = 0.0

    def pose(self, object_id) -> Pose:
        p, quat = self.poses[object_id]
        return Pose(p.copy(), quat.copy())


@dataclass
class Demonstration:
    scene_digest: str
    dt: float
    d: int
    object_ids: tuple
    source: str
    frames: list

    def __post_init__(self):
        if self.source not in SOURCES:
            raise DemoError(f"unknown demo source {self.source!r}")
        if self.d < 1 or self.dt <= 0.0:
            raise DemoError("demo header needs d >= 1 and dt > 0")
        self.object_ids = tuple(self.object_ids)
        for oid in self.object_ids:
            if not oid or any(c.isspace() or c == "," for c in oid):
                raise DemoError(f"object id {oid!r} is not a clean token")

    def __len__(self):
        return len(self.frames)

    @property
    def duration(self) -> float:
        return self.frames[-1].t - self.frames[0].t if self.frames else 0.0

    @property
    def progress(self) -> np.ndarray:
        return np.array([f.progress for f in self.frames])

    @property
    def is_labeled(self) -> bool:
        return len(self.frames) > 0 and self.frames[-1].progress == 1.0

    def equals(self, other) -> bool:
        if (self.scene_digest, self.dt, self.d, self.object_ids, self.source) != (
            other.scene_digest, other.dt, other.d, other.object_ids, other.source
        ):
            return False
        if len(self.frames) != len(other.frames):
            return False
        for a, b in zip(self.frames, other.frames):
            if a.t != b.t or a.progress != b.progress:
                return False
            if not (np.array_equal(a.q, b.q) and np.array_equal(a.qdot, b.qdot)):
                return False
            for oid in self.object_ids:
                pa, qa = a.poses[oid]
                pb, qb = b.poses[oid]
                va, wa = a.velocities[oid]
                vb, wb = b.velocities[oid]
                if not (np.array_equal(pa, pb) and np.array_equal(qa, qb)
                        and np.array_equal(va, vb) and np.array_equal(wa, wb)):
                    return False
        return True


def record(states, source="online") -> Demonstration:
    """Capture a fixed-rate stream of world states into a demonstration.

    Frames hold only what changes over time; everything static is pinned by
    the scene digest. A tick gap larger than 1% of dt is a recording error.
    """
    states = list(states)
    if not states:
        raise DemoError("cannot record an empty state stream")
    model = states[0].model
    dt = model.dt
    robot_links = set(model.robot.links)
    object_ids = tuple(b for b in model.body_ids if b not in robot_links)
    frames = []
    prev_t = None
    for i, w in enumerate(states):
        if w.model.config_digest != model.config_digest:
            raise DemoError(f"scene changed mid-stream at frame {i}")
        if prev_t is not None and abs((w.time - prev_t) - dt) > 0.01 * dt:
            raise DemoError(
                f"dt drift at frame {i}: expected step {dt:.9g}, "
                f"got {w.time - prev_t:.9g}"
            )
        prev_t = w.time
        poses = {}
        vels = {}
        for oid in object_ids:
            bi = w.body_index(oid)
            poses[oid] = (w.pos[bi].copy(), w.quat[bi].copy())
            vels[oid] = (w.vel[bi].copy(), w.omega[bi].copy())
        frames.append(
            Frame(t=w.time, q=w.joint_q.copy(), qdot=w.joint_qdot.copy(),
                  poses=poses, velocities=vels)
        )
    return Demonstration(
        scene_digest=model.config_digest,
        dt=dt,
        d=model.robot.d,
        object_ids=object_ids,
        source=source,
        frames=frames,
    )


def label_progress(demo: Demonstration) -> Demonstration:
    """Elapsed-time labels: label(i) = (t_i - t_0) / (t_last - t_0)."""
    if len(demo.frames) < 2:
        raise DemoError("cannot label progress on a demo with fewer than 2 frames")
    t0 = demo.frames[0].t
    span = demo.frames[-1].t - t0
    frames = [replace(f, progress=(f.t - t0) / span) for f in demo.frames]
    return replace(demo, frames=frames)


@dataclass
class TrainingPair:
    """Observation snapshot plus the target waypoint matrix that follows it."""

    frame: Frame
    target: np.ndarray  # (m, d+1): future joint targets and progress labels
    demo_key: str = ""


def make_training_pairs(demo: Demonstration, horizon=DEFAULT_HORIZON,
                        m=DEFAULT_WAYPOINTS, stride=1, demo_key="") -> list:
    """One pair per frame (configurable stride), targets interpolated ahead.

    Waypoint k of the pair at frame i targets time t_i + (k+1)*horizon/m;
    joint values and progress are linearly interpolated at fractional frame
    indices, and windows running past the end repeat the final frame.
    """
    if not demo.is_labeled:
        raise DemoError("label the demo before extracting pairs")
    if m < 1 or horizon <= 0.0 or stride < 1:
        raise DemoError("need m >= 1, horizon > 0, stride >= 1")
    n = len(demo.frames)
    q = np.stack([f.q for f in demo.frames])
    prog = np.array([f.progress for f in demo.frames])
    last = n - 1
    step_frames = horizon / (m * demo.dt)  # frames per waypoint interval
    pairs = []
    for i in range(0, n, stride):
        target = np.empty((m, demo.d + 1))
        for k in range(m):
            f = i + (k + 1) * step_frames
            if f >= last:
                target[k, : demo.d] = q[last]
                target[k, demo.d] = prog[last]
                continue
            lo = int(f)
            w = f - lo
            target[k, : demo.d] = (1.0 - w) * q[lo] + w * q[lo + 1]
            target[k, demo.d] = (1.0 - w) * prog[lo] + w * prog[lo + 1]
        pairs.append(TrainingPair(frame=demo.frames[i], target=target,
                                  demo_key=demo_key))
    return pairs


def _fmt(x: float) -> str:
    return f"{float(x):.9g}"


def save_demo(demo: Demonstration, path) -> None:
    lines = [
        " ".join(
            [MAGIC_TOKEN, str(SCHEMA_VERSION), demo.scene_digest, _fmt(demo.dt),
             str(demo.d), ",".join(demo.object_ids), demo.source]
        )
    ]
    for f in demo.frames:
        parts = [_fmt(f.t)]
        parts.extend(_fmt(v) for v in f.q)
        parts.extend(_fmt(v) for v in f.qdot)
        for oid in demo.object_ids:
            p, quat = f.poses[oid]
            v, w = f.velocities[oid]
            for arr in (p, quat, v, w):
                parts.extend(_fmt(x) for x in arr)
        parts.append(_fmt(f.progress))
        lines.append(" ".join(parts))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_demo(path, expect_digest=None) -> Demonstration:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise DemoFormatError(f"{path}: line 1: missing demo header")
    head = lines[0].split(" ")
    if len(head) != 7 or head[0] != MAGIC_TOKEN:
        raise DemoFormatError(f"{path}: line 1: not a demo header record")
    try:
        version = int(head[1])
    except ValueError:
        raise DemoFormatError(f"{path}: line 1: bad schema version {head[1]!r}") from None
    if version != SCHEMA_VERSION:
        raise DemoFormatError(
            f"{path}: schema version {version}, this build reads {SCHEMA_VERSION}"
        )
    digest = head[2]
    if expect_digest is not None and digest != expect_digest:
        raise DemoError(
            f"{path}: demo was recorded under scene digest {digest[:12]}.., "
            f"expected {expect_digest[:12]}.."
        )
    try:
        dt = float(head[3])
        d = int(head[4])
    except ValueError as e:
        raise DemoFormatError(f"{path}: line 1: {e}") from None
    object_ids = tuple(t for t in head[5].split(",") if t)
    source = head[6]
    want = 1 + 2 * d + 13 * len(object_ids) + 1
    frames = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        toks = line.split(" ")
        if len(toks) != want:
            raise DemoFormatError(
                f"{path}: line {ln}: expected {want} fields, got {len(toks)}"
            )
        try:
            vals = np.array([float(t) for t in toks])
        except ValueError:
            raise DemoFormatError(
                f"{path}: line {ln}: non-numeric frame field"
            ) from None
        off = 1
        q = vals[off : off + d]
        off += d
        qdot = vals[off : off + d]
        off += d
        poses = {}
        vels = {}
        for oid in object_ids:
            poses[oid] = (vals[off : off + 3], vals[off + 3 : off + 7])
            vels[oid] = (vals[off + 7 : off + 10], vals[off + 10 : off + 13])
            off += 13
        frames.append(Frame(t=vals[0], q=q, qdot=qdot, poses=poses,
                            velocities=vels, progress=vals[off]))
    if not frames:
        raise DemoError(f"{path}: header-only file, demo has zero frames")
    demo = Demonstration(scene_digest=digest, dt=dt, d=d, object_ids=object_ids,
                         source=source, frames=frames)
    for i in range(1, len(frames)):
        gap = frames[i].t - frames[i - 1].t
        if abs(gap - dt) > 0.01 * dt:
            raise DemoFormatError(
                f"{path}: line {i + 2}: frame time breaks the {dt:.9g} s grid"
            )
    return demo


def _block_xyyaw(world) -> np.ndarray:
    i = world.body_index(world.model.tblock_id)
    qw, qx, qy, qz = world.quat[i]
    yaw = math.atan2(2.0 * (qw * qz + qx * qy), 1.0 - 2.0 * (qy * qy + qz * qz))
    return np.array([world.pos[i, 0], world.pos[i, 1], yaw])


def harvest_failures(report, pos_tol=DEDUP_POS, yaw_tol=DEDUP_YAW) -> list:
    """Terminal world states of failed episodes, worth replaying as starts.

    Deduplicates by block pose proximity (duplicates sit within both the
    position and yaw bounds) and orders the result longest stall first, so
    the states a policy most often gets stuck in come up for demonstration
    before rarer ones.
    """
    episodes = getattr(report, "episodes", report)
    failures = [
        (float(getattr(e, "stall_time", 0.0)), i, e.terminal_state)
        for i, e in enumerate(episodes)
        if not e.success and getattr(e, "terminal_state", None) is not None
    ]
    failures.sort(key=lambda item: (-item[0], item[1]))
    kept = []
    kept_poses = []
    for _, _, state in failures:
        xyyaw = _block_xyyaw(state)
        dup = False
        for seen in kept_poses:
            dp, dyaw = se2_error(xyyaw, seen)
            if dp <= pos_tol and dyaw <= yaw_tol:
                dup = True
                break
        if not dup:
            kept.append(state)
            kept_poses.append(xyyaw)
    return kept


@dataclass
class DemoSet:
    """A bundle of demonstrations recorded under one scene config."""

    demos: list
    labels: tuple = ()

    def __post_init__(self):
        if not self.demos:
            raise DemoError("a demo set needs at least one demonstration")
        digest = self.demos[0].scene_digest
        d = self.demos[0].d
        for i, demo in enumerate(self.demos):
            if demo.scene_digest != digest:
                raise DemoError(
                    f"demo {i} was recorded under a different scene digest"
                )
            if demo.d != d:
                raise DemoError(f"demo {i} has d={demo.d}, set has d={d}")
        if not self.labels:
            self.labels = tuple(f"demo{i:03d}" for i in range(len(self.demos)))
        elif len(self.labels) != len(self.demos):
            raise DemoError("provenance labels must match the demo count")
        else:
            self.labels = tuple(self.labels)

    def __len__(self):
        return len(self.demos)

    @property
    def digest(self) -> str:
        return self.demos[0].scene_digest

    @property
    def d(self) -> int:
        return self.demos[0].d

    def training_pairs(self, horizon=DEFAULT_HORIZON, m=DEFAULT_WAYPOINTS,
                       stride=1) -> list:
        pairs = []
        for demo, label in zip(self.demos, self.labels):
            pairs.extend(make_training_pairs(demo, horizon, m, stride,
                                             demo_key=label))
        return pairs


def merge_datasets(sets) -> DemoSet:
    """Concatenate demo sets recorded under the same scene config."""
    sets = list(sets)
    if not sets:
        raise DemoError("nothing to merge")
    digest = sets[0].digest
    d = sets[0].d
    for i, s in enumerate(sets):
        if s.digest != digest:
            raise DemoError(f"set {i} has a different scene digest, cannot merge")
        if s.d != d:
            raise DemoError(f"set {i} has d={s.d}, expected {d}")
    demos = []
    labels = []
    for s in sets:
        demos.extend(s.demos)
        labels.extend(s.labels)
    return DemoSet(demos=demos, labels=tuple(labels))


def frame_world(frame: Frame, base_world):
    """World state equivalent to a recorded frame, for rendering or replay.

    Free objects come straight from the frame; robot link poses are
    recomputed from the joint values through the prismatic chain. Contact
    friction anchors reset, so replay dynamics re-anchor on first touch.
    """
    w = base_world.copy()
    m = w.model
    if frame.q.shape != (m.robot.d,):
        raise DemoError(f"frame has {frame.q.shape} joints, scene has {m.robot.d}")
    w.time = frame.t
    w.joint_q[:] = frame.q
    w.joint_qdot[:] = frame.qdot
    w.joint_qdes[:] = frame.q
    for oid, (p, quat) in frame.poses.items():
        i = w.body_index(oid)
        w.pos[i] = p
        w.quat[i] = quat
        v, om = frame.velocities[oid]
        w.vel[i] = v
        w.omega[i] = om
    # prismatic chain: parents always precede children in joint order
    for j in range(m.num_joints):
        child = m.joint_child[j]
        parent = m.joint_parent[j]
        base = m.joint_anchor_p[j].copy()
        pvel = np.zeros(3)
        if parent >= 0:
            base += w.pos[parent]
            pvel = w.vel[parent]
        w.pos[child] = base + m.joint_axis[j] * frame.q[j] - m.joint_anchor_c[j]
        w.quat[child] = [1.0, 0.0, 0.0, 0.0]
        w.vel[child] = pvel + m.joint_axis[j] * frame.qdot[j]
        w.omega[child] = 0.0
    w.pending_force[:] = 0.0
    w.pending_torque[:] = 0.0
    w.fric_flag[:] = 0
    w.max_penetration = 0.0
    w.max_joint_residual = 0.0
    return w


def state_observation(frame: Frame, object_id=None) -> np.ndarray:
    """Policy conditioning vector (q, p, quat) for the state representation."""
    if object_id is None:
        if len(frame.poses) != 1:
            raise DemoError("object_id is required when a frame tracks several")
        object_id = next(iter(frame.poses))
    p, quat = frame.poses[object_id]
    return np.concatenate([frame.q, p, quat])


def state_training_arrays(pairs, object_id=None):
    """(obs, targets) arrays for state-kind training from a pair list."""
    if not pairs:
        raise DemoError("no training pairs")
    obs = np.stack([state_observation(p.frame, object_id) for p in pairs])
    targets = np.stack([p.target.ravel() for p in pairs])
    return obs, targets


class RenderedPairDataset:
    """Camera-kind batches: ((q, images), targets) with an on-demand cache.

    Images are rasterized from reconstructed frame worlds the first time a
    pair is drawn and kept as uint8 thereafter.
    """

    def __init__(self, pairs, base_world, camera):
        if not pairs:
            raise DemoError("no training pairs")
        self.pairs = list(pairs)
        self.base_world = base_world
        self.camera = camera
        h, w = camera.height, camera.width
        self._cache = np.zeros((len(self.pairs), h, w, 3), dtype=np.uint8)
        self._have = np.zeros(len(self.pairs), dtype=bool)
        self.targets = np.stack([p.target.ravel() for p in self.pairs])
        self.q = np.stack([p.frame.q for p in self.pairs])
        self.rendered = 0

    def __len__(self):
        return len(self.pairs)

    def _image(self, i):
        if not self._have[i]:
            from .render import render

            world = frame_world(self.pairs[i].frame, self.base_world)
            self._cache[i] = render(world, self.camera).to_array()
            self._have[i] = True
            self.rendered += 1
        return self._cache[i]

    def get_batch(self, idx):
        imgs = np.stack([self._image(int(i)) for i in idx])
        images = imgs.astype(np.float64).transpose(0, 3, 1, 2) / 255.0
        return (self.q[idx], images), self.targets[idx]
