"""Greedy scripted pusher: a reproducible stand-in for a human demonstrator.

The controller is stateless. Every tick it classifies the block's pose error,
picks a push line whose contact would shrink that error, and emits the next
joint target: either staging toward the line's entry point (detouring around
the block) or driving along the line through the block. Episode and demo
collection helpers live here too, together with the geometric success test
they terminate on.
"""

from __future__ import annotations

import math

import numpy as np

from .demos import label_progress, record
from .mathutils import se2_error, stable_hash_u64, wrap_angle
from .physics import engine, scene
from . import twinsync

POS_TOL = 0.02
YAW_TOL = math.radians(10.0)

# the joint PD tracks a moving setpoint at roughly kp/kd * offset m/s, so the
# commanded point sits a carrot length ahead of the joint, not one tick ahead
STEP_CAP = 0.012
DRIVE_CAP = 0.014  # slower carrot while pushing keeps contact near-static
FINE_CAP = 0.010  # gentler still for rotations and finishing pushes
STANDOFF = 0.105  # entry point distance behind the block center
ROT_STANDOFF = 0.08  # entry distance behind a rotation contact
STAGE_MARGIN = 0.010  # transit clearance between pusher and block surfaces
ALIGN_TOL = 0.016  # lateral slack before re-staging onto the line
# the silhouette depth along a push line swings from 0.030 to 0.085 m with
# block orientation, so "behind the block" is judged against the actual
# sphere compound; the slack past the computed entry covers the pusher
# nesting into the scallops between spheres, which reads several mm shallow
CONTACT_SLACK = 0.014
ROT_GATE = 0.016  # below this distance, leftover yaw error gets rotated out
YAW_GATE = math.radians(6.0)  # yaw error worth a dedicated rotation push
YAW_COARSE = 0.5  # yaw error that outranks positioning once roughly there
ROT_STICK = 0.06  # an engaged rotation keeps the contact out to this range
DRIVE_AHEAD = 0.06  # how far past the anchor the drive waypoint sits
SMALL_PUSH = 0.035  # short enough to push from any side without re-aligning
FACE_TOL = 0.35  # rad of face misalignment that triggers a rotation push
FACE_EXIT = 0.08  # rad where an engaged rotation push lets go again
# while coupled to a proxy, a contact flurry can throw the twin block far off
# the proxy pose; pressing on makes the pusher pin the twin against the
# capped correction wrench, so the collector retreats until the poses rejoin.
# healthy pushing shows gaps to 0.037 m / 0.6 rad that close on their own, so
# the trigger sits above that and must hold for a second before it counts
BACKOFF_GAP = 0.05
BACKOFF_YAW = 0.9
BACKOFF_TICKS = 60
RESYNC_GAP = 0.015
RESYNC_YAW = 0.15


def block_xyyaw(world) -> np.ndarray:
    """Planar pose (x, y, yaw) of the T-block."""
    i = world.body_index(world.model.tblock_id)
    qw, qx, qy, qz = world.quat[i]
    yaw = math.atan2(2.0 * (qw * qz + qx * qy), 1.0 - 2.0 * (qy * qy + qz * qz))
    return np.array([world.pos[i, 0], world.pos[i, 1], yaw])


def geometric_success(world, target=None, pos_tol=POS_TOL, yaw_tol=YAW_TOL) -> bool:
    """True when the block sits within (pos_tol, yaw_tol) of the target."""
    tgt = np.asarray(world.model.target_pose if target is None else target,
                     dtype=np.float64)
    dp, dyaw = se2_error(block_xyyaw(world), tgt)
    return dp <= pos_tol and dyaw <= yaw_tol


def _perp(v: np.ndarray) -> np.ndarray:
    return np.array([-v[1], v[0]])


def _unit(v: np.ndarray):
    n = float(np.hypot(v[0], v[1]))
    return (v / n if n > 0.0 else v), n


def _go_straight(q, waypoint, cap):
    u, d = _unit(waypoint - q)
    return q + u * min(cap, d)


def _path_blocked(world, q, u, d):
    """Where the segment from q along u of length d meets the inflated block.

    Returns the obstruction distance, 0.0 when already overlapping, or None
    for a clear run. Inflation keeps transit a margin off the real surface.
    """
    m = world.model
    sel = m.body_sphere_slice(m.body_index[m.tblock_id])
    centers = world.sphere_centers()[sel][:, :2]
    reach = m.sphere_radius[sel] + _pusher_radius(m) + STAGE_MARGIN
    rel = centers - q
    if (np.einsum("ij,ij->i", rel, rel) < reach ** 2).any():
        return 0.0
    along = rel @ u
    across = np.abs(u[0] * rel[:, 1] - u[1] * rel[:, 0])
    hit = (across < reach) & (along > 0.0)
    if not hit.any():
        return None
    t = (along[hit] - np.sqrt(reach[hit] ** 2 - across[hit] ** 2)).min()
    return float(t) if t < d else None


def _stage(world, q, waypoint, center, cap, workspace):
    """Step toward a waypoint, walking around the block where it obstructs."""
    u, d = _unit(waypoint - q)
    if d < 1e-12:
        return q.copy()
    hit = _path_blocked(world, q, u, d)
    if hit is None:
        return q + u * min(cap, d)
    r, _ = _unit(q - center)
    tan = _perp(r)
    if float(tan @ u) < 0.0:
        tan = -tan
    # scraping the surface pushes off radially, a far obstruction just skirts
    dirv, _ = _unit(tan + (1.5 if hit <= 0.0 else 0.3) * r)
    return _sidestep(q, dirv, cap, workspace)


def _sidestep(q, dirv, cap, workspace):
    """Tangent step that falls back to the other side at a workspace wall."""
    nxt = q + dirv * cap
    clamped = engine.clamp_to_plane(nxt, workspace)
    if float(np.hypot(*(clamped - q))) < 0.5 * cap:
        return q - dirv * cap
    return nxt


def _entry_standoff(world, anchor, u_line, contact, standoff, workspace):
    """Entry distance behind the anchor that stays inside the workspace.

    A block parked near a wall can leave the nominal entry outside the
    reachable plane; the approach then shortens to whatever fits, but never
    into the block itself.
    """
    floor = 0.03 if contact is None else max(-contact + 0.012, 0.03)
    xmin, ymin, xmax, ymax = workspace
    s = standoff
    for a, lo, hi, ui in ((anchor[0], xmin, xmax, u_line[0]),
                          (anchor[1], ymin, ymax, u_line[1])):
        if ui > 1e-9:
            s = min(s, (a - lo - 0.006) / ui)
        elif ui < -1e-9:
            s = min(s, (hi - 0.006 - a) / -ui)
    return max(s, floor)


def _pusher_radius(model) -> float:
    sel = model.body_sphere_slice(model.body_index[model.pusher_id])
    return float(model.sphere_radius[sel].max())


def _line_contact_depth(world, anchor, u):
    """Signed distance along the push line where it first meets the block.

    None when the line misses the compound entirely. Contact counts the
    pusher's own radius, so the returned depth is where the pusher center
    stops, not where the surfaces touch.
    """
    m = world.model
    sel = m.body_sphere_slice(m.body_index[m.tblock_id])
    centers = world.sphere_centers()[sel][:, :2]
    reach = m.sphere_radius[sel] + _pusher_radius(m)
    rel = centers - anchor
    along_c = rel @ u
    across_c = np.abs(u[0] * rel[:, 1] - u[1] * rel[:, 0])
    hit = across_c < reach
    if not hit.any():
        return None
    t = along_c[hit] - np.sqrt(reach[hit] ** 2 - across_c[hit] ** 2)
    return float(t.min())


# body-frame rotation contacts: push points on the stem side faces and on the
# crossbar top near an arm, keyed to the 0.02 sphere grid (radius 0.01).
# r x F is the same sign for both members of each pair, so any of them only
# ever turns the block the requested way.
_ROT_CONTACTS = {
    -1.0: (((0.025, -0.056), (-1.0, 0.0)), ((0.040, 0.052), (0.0, -1.0))),
    1.0: (((-0.025, -0.056), (1.0, 0.0)), ((-0.040, 0.052), (0.0, -1.0))),
}


def _rotation_line(world, b, err_yaw, q):
    """Side push with the requested torque sign, nearest entry first."""
    c, s = math.cos(b[2]), math.sin(b[2])
    rot = np.array([[c, -s], [s, c]])
    best = None
    for loc, direc in _ROT_CONTACTS[math.copysign(1.0, err_yaw)]:
        contact = b[:2] + rot @ np.asarray(loc)
        u_line = rot @ np.asarray(direc)
        entry = contact - ROT_STANDOFF * u_line
        score = float(np.hypot(*(entry - q)))
        if best is None or score < best[0]:
            best = (score, contact, u_line)
    return best[1], best[2]


def _rotation_engaged(b, sign, q) -> bool:
    """Pusher already placed on a rotation push line with this torque sign.

    Being near the contact point is not enough: other modes route the pusher
    right past these contacts, and treating a flyby as engagement flaps the
    controller. On the line, behind the contact, counts.
    """
    c, s = math.cos(b[2]), math.sin(b[2])
    rot = np.array([[c, -s], [s, c]])
    for loc, direc in _ROT_CONTACTS[sign]:
        contact = b[:2] + rot @ np.asarray(loc)
        u_line = rot @ np.asarray(direc)
        rel = q - contact
        along = float(rel @ u_line)
        across = abs(float(u_line[0] * rel[1] - u_line[1] * rel[0]))
        if across <= ALIGN_TOL and -ROT_STANDOFF - 0.02 <= along <= CONTACT_SLACK:
            return True
    return False


def _crest_anchor(world, b, u, err_yaw):
    """Back-side sphere crest to aim the short push line through.

    Running the line through a sphere center puts the contact force exactly
    along the line, so the block tracks it instead of squirting sideways.
    The leftover torque (center offset from the block's own center) is picked
    small, signed to bleed off whatever yaw error is pending.
    """
    m = world.model
    sel = m.body_sphere_slice(m.body_index[m.tblock_id])
    centers = world.sphere_centers()[sel][:, :2]
    rel = centers - b[:2]
    along = rel @ u
    torque = rel[:, 0] * u[1] - rel[:, 1] * u[0]
    back = along < -0.005
    if not back.any():
        back = along <= along.min() + 1e-9
    idx = np.flatnonzero(back)
    want = math.copysign(1.0, err_yaw) if abs(err_yaw) > 0.05 else 0.0
    def rank(i):
        t = float(torque[i])
        if want != 0.0 and math.copysign(1.0, t) == want and abs(t) <= 0.035:
            return (0, -abs(t))
        return (1, abs(t))
    return centers[min(idx, key=rank)].copy()


def scripted_expert(world, target=None, cap=STEP_CAP) -> np.ndarray:
    """Next joint target for the pusher, one greedy tick of push control."""
    m = world.model
    tgt = np.asarray(m.target_pose if target is None else target, dtype=np.float64)
    q = world.joint_q[:2].copy()
    if geometric_success(world, tgt):
        return q
    b = block_xyyaw(world)
    err_p = tgt[:2] - b[:2]
    dist = float(np.hypot(*err_p))
    err_yaw = wrap_angle(tgt[2] - b[2])

    rotate_by = 0.0
    if abs(err_yaw) > YAW_GATE and (
            dist <= ROT_GATE
            or (dist <= SMALL_PUSH and abs(err_yaw) > YAW_COARSE)
            or (dist <= ROT_STICK
                and _rotation_engaged(b, math.copysign(1.0, err_yaw), q))):
        # yaw work happens near the target: a dedicated pass once the block
        # is parked, straight away when yaw still dominates. an engaged
        # contact keeps rotating even when its own pushes drift the block
        # back out of the start zone, else the modes flap at the boundary
        rotate_by = err_yaw
    elif dist > SMALL_PUSH:
        # long pushes only land on the two flat faces (crossbar top or stem
        # tip); mid-face contact keys into a scallop and barely torques, while
        # corner contact spins the block faster than it translates. leftover
        # yaw gets fixed at the target, where rotation is slow and keeps
        # being interrupted, so the post-push share of the turn weighs more
        face_yaw = math.atan2(err_p[0], -err_p[1])
        best = None
        for cand in (face_yaw, wrap_angle(face_yaw + math.pi)):
            pre = wrap_angle(cand - b[2])
            post = wrap_angle(tgt[2] - cand)
            score = abs(pre) + 1.5 * abs(post)
            if best is None or score < best[0]:
                best = (score, pre)
        # an engaged rotation keeps going well past the trigger band, else
        # the first face push drifts it straight back over the threshold
        tol = FACE_TOL
        if abs(best[1]) > FACE_EXIT and _rotation_engaged(
                b, math.copysign(1.0, best[1]), q):
            tol = FACE_EXIT
        if abs(best[1]) > tol:
            rotate_by = best[1]

    if rotate_by != 0.0:
        anchor, u_line = _rotation_line(world, b, rotate_by, q)
        standoff = ROT_STANDOFF
    else:
        u_line = err_p / dist
        if dist <= SMALL_PUSH:
            anchor = _crest_anchor(world, b, u_line, err_yaw)
        else:
            anchor = b[:2].copy()
        standoff = STANDOFF

    rel = q - anchor
    along = float(rel @ u_line)
    across = abs(float(u_line[0] * rel[1] - u_line[1] * rel[0]))
    contact = _line_contact_depth(world, anchor, u_line)
    behind = contact is not None and along <= contact + CONTACT_SLACK
    if behind and across <= ALIGN_TOL:
        # rotations and last-centimetre pushes ride a single contact that
        # slips off its sphere when hit hard, so they drive softer
        drive = FINE_CAP if (rotate_by != 0.0
                             or dist <= ROT_GATE + 0.01) else DRIVE_CAP
        nxt = _go_straight(q, anchor + DRIVE_AHEAD * u_line, drive)
    else:
        s = _entry_standoff(world, anchor, u_line, contact, standoff,
                            m.workspace)
        nxt = _stage(world, q, anchor - s * u_line, b[:2], cap, m.workspace)
    return engine.clamp_to_plane(nxt, m.workspace)


def run_expert_episode(world, target=None, max_seconds=60.0):
    """Drive the expert to success or timeout; returns (states, success)."""
    states = [world]
    w = world
    for _ in range(int(round(max_seconds / w.model.dt))):
        if geometric_success(w, target):
            break
        w = engine.step(engine.set_joint_target(w, scripted_expert(w, target)))
        states.append(w)
    return states, geometric_success(w, target)


def _pose_stream(kind: str, seed: int):
    """Endless deterministic start poses, kept clear of target and home."""
    rng = np.random.default_rng(stable_hash_u64("start-poses", kind, seed))
    cfg = scene.merge_config(None)
    target = np.asarray(cfg["tblock"]["target_pose"])
    home = np.asarray(cfg["robot"]["home"])
    while True:
        x, y = rng.uniform(-0.12, 0.12, 2)
        yaw = rng.uniform(-math.pi, math.pi)
        if np.hypot(x - target[0], y - target[1]) < 0.06:
            continue
        if np.hypot(x - home[0], y - home[1]) < 0.12:
            continue
        yield (float(x), float(y), float(yaw))


def demo_start_poses(n=30, seed=0) -> list:
    gen = _pose_stream("demo", seed)
    return [next(gen) for _ in range(n)]


def eval_start_poses(n=20, seed=0, avoid=None) -> list:
    """Evaluation starts, disjoint from ``avoid`` (default: the demo set)."""
    if avoid is None:
        # cover the whole attempt budget of collect_demos, not just the
        # poses that turn into successful demos
        avoid = demo_start_poses(n=90, seed=seed)
    gen = _pose_stream("eval", seed)
    out = []
    while len(out) < n:
        cand = next(gen)
        near = any(
            dp <= 0.02 and dyaw <= math.radians(15.0)
            for dp, dyaw in (se2_error(np.asarray(cand), np.asarray(p))
                             for p in list(avoid) + out)
        )
        if not near:
            out.append(cand)
    return out


def start_world(start, config=None, seed=0):
    """World for an episode start: an SE(2) block pose or a saved WorldState."""
    if hasattr(start, "model"):
        return start.copy()
    world = scene.build_scene(config, seed)
    return scene.set_tblock_pose(world, *start)


def _retreat(world):
    """Back the pusher straight away from the block to free the contact."""
    q = world.joint_q[:2].copy()
    u, d = _unit(q - block_xyyaw(world)[:2])
    if d == 0.0:
        u = np.array([-1.0, 0.0])
    return engine.clamp_to_plane(q + STEP_CAP * u, world.model.workspace)


def collect_demo(start, config=None, mode="offline", max_seconds=60.0,
                 seed=0, target=None):
    """One expert demonstration; returns (demo | None, success).

    Offline mode runs plain physics. Online mode drives the coupled twin
    against a proxy world and records the twin, the same channel live
    sessions record through. When the twin block strays too far from the
    proxy block the collector backs the pusher off and waits for the
    correction to pull the poses together, like an operator pausing when
    the overlay drifts off the camera image. Failures return no demo.
    """
    world = start_world(start, config, seed)
    if mode == "offline":
        states, ok = run_expert_episode(world, target, max_seconds)
    elif mode == "online":
        system = twinsync.make_online(
            world, twinsync.ProxyWorld(world.copy()),
            seed=stable_hash_u64("collect", seed),
        )
        states = [system.twin]
        ok = False
        backing = False
        high = 0
        for _ in range(int(round(max_seconds / world.model.dt))):
            if geometric_success(system.twin, target):
                ok = True
                break
            dp, dyaw = se2_error(block_xyyaw(system.twin),
                                 block_xyyaw(system.proxy.world))
            if backing:
                backing = dp > RESYNC_GAP or dyaw > RESYNC_YAW
            elif dp > BACKOFF_GAP or dyaw > BACKOFF_YAW:
                high += 1
                backing = high >= BACKOFF_TICKS
            else:
                high = 0
            q_cmd = (_retreat(system.twin) if backing
                     else scripted_expert(system.twin, target))
            system = twinsync.coupled_step(system, q_cmd)
            states.append(system.twin)
        ok = ok or geometric_success(system.twin, target)
    else:
        raise ValueError(f"unknown collection mode {mode!r}")
    if not ok:
        return None, False
    return label_progress(record(states, source="scripted")), True


def collect_demos(n=30, config=None, mode="offline", seed=0,
                  max_seconds=60.0) -> list:
    """First n successful expert demos over the deterministic start stream."""
    gen = _pose_stream("demo", seed)
    demos = []
    attempts = 0
    while len(demos) < n:
        if attempts >= 3 * n:
            raise RuntimeError(
                f"expert produced {len(demos)}/{n} demos in {attempts} attempts")
        attempts += 1
        demo, ok = collect_demo(next(gen), config, mode, max_seconds, seed)
        if ok:
            demos.append(demo)
    return demos
