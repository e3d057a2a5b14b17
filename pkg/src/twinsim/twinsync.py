"""Coupling between the simulated twin and a stand-in real world.

The proxy is a second simulator instance with independently perturbed
parameters. Its robot follows the twin's measured joint positions (never the
desired targets), and the twin's objects are pulled toward noisy pose
observations of the proxy's objects by capped PD wrenches. In offline mode
the proxy is absent and the twin runs free.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from twinsim.mathutils import (
    quat_conj,
    quat_from_axis_angle,
    quat_mul,
    quat_normalize,
    quat_to_axis_angle,
    stable_hash_u64,
)
from twinsim.physics import apply_wrench, set_joint_target, step
from twinsim.physics.state import PhysicsError, Pose, WorldState

OBS_RATE_HZ = 30.0


class CouplingModeError(PhysicsError):
    pass


@dataclass(frozen=True)
class SyncGains:
    kp_lin: float = 50.0
    kd_lin: float = 2.0
    kp_rot: float = 2.0
    kd_rot: float = 0.05
    force_cap: float = 5.0
    torque_cap: float = 1.0


@dataclass(frozen=True)
class NoiseModel:
    sigma_p: float = 0.002
    sigma_theta: float = math.radians(1.0)
    dropout: float = 0.02
    latency_ticks: int = 1
    rate_hz: float = OBS_RATE_HZ

    def __post_init__(self):
        if self.latency_ticks < 0 or not 0.0 <= self.dropout <= 1.0:
            raise ValueError("invalid observation noise model")


ZERO_NOISE = NoiseModel(sigma_p=0.0, sigma_theta=0.0, dropout=0.0)


class CorrectiveInput:
    """Per-object wrench set u_t; empty means no correction."""

    __slots__ = ("entries",)

    def __init__(self, entries=None):
        self.entries = dict(entries or {})
        for bid, (f, t) in self.entries.items():
            f = np.asarray(f, dtype=np.float64)
            t = np.asarray(t, dtype=np.float64)
            if not (np.isfinite(f).all() and np.isfinite(t).all()):
                raise ValueError(f"non-finite corrective wrench for {bid}")
            self.entries[bid] = (f, t)

    def is_zero(self) -> bool:
        return all(
            not f.any() and not t.any() for f, t in self.entries.values()
        )

    def max_force(self) -> float:
        if not self.entries:
            return 0.0
        return max(float(np.linalg.norm(f)) for f, _ in self.entries.values())

    def max_torque(self) -> float:
        if not self.entries:
            return 0.0
        return max(float(np.linalg.norm(t)) for _, t in self.entries.values())


ZERO_CORRECTION = CorrectiveInput()


@dataclass
class Observation:
    timestamp: float
    poses: dict  # body_id -> Pose
    valid: dict  # body_id -> bool
    rate_hz: float


class ProxyWorld:
    """Stand-in real world: its own physics plus an observation noise model.

    Pose snapshots are queued so observations can lag the present by a fixed
    number of ticks.
    """

    def __init__(self, world: WorldState, noise: NoiseModel = NoiseModel()):
        self.world = world
        self.noise = noise
        self.tracked = tuple(
            bid for bid in world.model.body_ids
            if bid not in world.model.robot.links
        )
        self._history = deque(maxlen=noise.latency_ticks + 1)
        self._snapshot()

    def _snapshot(self):
        m = self.world.model
        poses = {
            bid: Pose(self.world.pos[m.body_index[bid]].copy(),
                      self.world.quat[m.body_index[bid]].copy())
            for bid in self.tracked
        }
        self._history.append((self.world.time, poses))

    def lagged_poses(self):
        return self._history[0]

    def step_follow(self, q_twin) -> None:
        self.world = step(set_joint_target(self.world, q_twin))
        self._snapshot()

    def copy(self) -> "ProxyWorld":
        c = ProxyWorld.__new__(ProxyWorld)
        c.world = self.world.copy()
        c.noise = self.noise
        c.tracked = self.tracked
        c._history = deque(
            ((t, {bid: p.copy() for bid, p in poses.items()})
             for t, poses in self._history),
            maxlen=self._history.maxlen,
        )
        return c


def observe(proxy: ProxyWorld, seed: int) -> Observation:
    """Noisy, possibly dropped-out poses of the proxy's tracked objects."""
    t, poses = proxy.lagged_poses()
    n = proxy.noise
    rng = np.random.default_rng(seed)
    out_poses = {}
    out_valid = {}
    for bid in proxy.tracked:
        p = poses[bid]
        dropped = n.dropout > 0.0 and rng.random() < n.dropout
        out_valid[bid] = not dropped
        if n.sigma_p > 0.0:
            pos = p.position + rng.normal(0.0, n.sigma_p, 3)
        else:
            pos = p.position.copy()
        if n.sigma_theta > 0.0:
            axis = rng.normal(size=3)
            ang = rng.normal(0.0, n.sigma_theta)
            quat = quat_normalize(quat_mul(quat_from_axis_angle(axis, ang),
                                           p.orientation))
        else:
            quat = p.orientation.copy()
        out_poses[bid] = Pose(pos, quat)
    return Observation(timestamp=t, poses=out_poses, valid=out_valid,
                       rate_hz=n.rate_hz)


def _capped(v: np.ndarray, cap: float) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n > cap:
        return v * (cap / n)
    return v


# errors below any plausible tracker resolution produce no wrench at all;
# this keeps the matched zero-noise coupling an exact fixed point despite
# machine-precision jitter of resting contacts
DEADBAND = 1e-9


def compute_correction(twin: WorldState, obs: Observation,
                       gains: SyncGains = SyncGains()) -> CorrectiveInput:
    """PD wrenches pulling twin objects toward observed poses."""
    m = twin.model
    robot_links = set(m.robot.links)
    entries = {}
    for bid, pose in obs.poses.items():
        if bid not in m.body_index:
            continue
        if bid in robot_links:
            raise ValueError(f"observation of robot body {bid} cannot be corrected")
        i = m.body_index[bid]
        if not obs.valid.get(bid, False):
            entries[bid] = (np.zeros(3), np.zeros(3))
            continue
        pos_err = pose.position - twin.pos[i]
        rot_err = quat_to_axis_angle(
            quat_mul(pose.orientation, quat_conj(twin.quat[i]))
        )
        if (np.linalg.norm(pos_err) < DEADBAND
                and np.linalg.norm(rot_err) < DEADBAND
                and np.linalg.norm(twin.vel[i]) < DEADBAND
                and np.linalg.norm(twin.omega[i]) < DEADBAND):
            entries[bid] = (np.zeros(3), np.zeros(3))
            continue
        force = gains.kp_lin * pos_err - gains.kd_lin * twin.vel[i]
        torque = gains.kp_rot * rot_err - gains.kd_rot * twin.omega[i]
        entries[bid] = (_capped(force, gains.force_cap),
                        _capped(torque, gains.torque_cap))
    return CorrectiveInput(entries)


@dataclass
class CoupledSystem:
    twin: WorldState
    proxy: ProxyWorld | None
    gains: SyncGains = field(default_factory=SyncGains)
    mode: str = "online"
    seed: int = 0
    tick: int = 0
    held_u: CorrectiveInput = field(default_factory=CorrectiveInput)
    last_obs: Observation | None = None

    def __post_init__(self):
        if self.mode not in ("online", "offline"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "online":
            if self.proxy is None:
                raise CouplingModeError("online mode requires a proxy world")
            if self.proxy.world.model.body_ids != self.twin.model.body_ids:
                raise ValueError("proxy and twin scenes list different bodies")
            if self.proxy.world.model.robot.d != self.twin.model.robot.d:
                raise ValueError("proxy and twin robots differ")
        elif self.proxy is not None:
            raise CouplingModeError("offline mode carries no proxy")

    def copy(self) -> "CoupledSystem":
        return replace(
            self, twin=self.twin.copy(),
            proxy=self.proxy.copy() if self.proxy is not None else None,
        )


def make_offline(twin: WorldState, gains: SyncGains = SyncGains(),
                 seed: int = 0) -> CoupledSystem:
    return CoupledSystem(twin=twin, proxy=None, gains=gains, mode="offline",
                         seed=seed)


def make_online(twin: WorldState, proxy: ProxyWorld,
                gains: SyncGains = SyncGains(), seed: int = 0) -> CoupledSystem:
    return CoupledSystem(twin=twin, proxy=proxy, gains=gains, mode="online",
                         seed=seed)


def follower_tick(system: CoupledSystem) -> CoupledSystem:
    """Proxy robot chases the twin's measured joints with its own physics."""
    if system.mode != "online":
        raise CouplingModeError("follower runs only in online mode")
    proxy = system.proxy.copy()
    proxy.step_follow(system.twin.joint_q.copy())
    return replace(system, proxy=proxy)


def coupled_step(system: CoupledSystem, q_prime, seed=None) -> CoupledSystem:
    """Advance twin (and proxy, when online) by one 60 Hz tick."""
    twin = set_joint_target(system.twin, q_prime)
    if system.mode == "offline":
        return replace(system, twin=step(twin), tick=system.tick + 1)

    held_u = system.held_u
    last_obs = system.last_obs
    interval = max(1, int(round(1.0 / (system.proxy.noise.rate_hz * twin.model.dt))))
    if system.tick % interval == 0:
        base = system.seed if seed is None else seed
        last_obs = observe(system.proxy, stable_hash_u64(base, system.tick))
        held_u = compute_correction(twin, last_obs, system.gains)
    for bid, (f, t) in held_u.entries.items():
        twin = apply_wrench(twin, bid, f, t)
    twin = step(twin)

    proxy = system.proxy.copy()
    proxy.step_follow(twin.joint_q.copy())
    return replace(system, twin=twin, proxy=proxy, tick=system.tick + 1,
                   held_u=held_u, last_obs=last_obs)


def sync_error(system: CoupledSystem) -> float:
    """Positional RMS mismatch between twin and proxy objects, meters."""
    if system.mode != "online":
        raise CouplingModeError("sync error is defined only in online mode")
    tm = system.twin.model
    pm = system.proxy.world.model
    acc = 0.0
    ids = system.proxy.tracked
    for bid in ids:
        d = system.twin.pos[tm.body_index[bid]] \
            - system.proxy.world.pos[pm.body_index[bid]]
        acc += float(np.dot(d, d))
    return math.sqrt(acc / len(ids)) if ids else 0.0


def push_train(t, step_east=0.03, depth=0.035, staging=0.115,
               lateral=0.004, cycle_s=4.0, anchor=(-0.05, -0.05)):
    """Open-loop pushing routine that exercises the coupling under contact.

    Each cycle dwells at a staging point west of where the object is
    expected to sit, strokes east to just short of its expected center,
    and retreats to the next staging point.  The expected center ratchets
    east by ``step_east`` per cycle, matching the distance one stroke
    carries the object, so strokes stay engaged as it drifts.  The whole
    pattern runs at a fixed y: ``lateral`` offsets the stroke line from
    the object's center line.  Near zero offset the push sits close to the
    rotation-neutral line, where small differences between two worlds pick
    opposite spin directions and compound instead of washing out.

    Returns the pusher target [x, y] for 60 Hz tick ``t``.
    """
    s = t / 60.0
    k = int(s // cycle_s)
    u = s - cycle_s * k
    px = anchor[0] + step_east * k
    y = anchor[1] + lateral
    ax = px - staging
    bx = px - depth
    if u < 1.0:
        return [ax, y]
    if u < 2.5:
        w = (u - 1.0) / 1.5
        return [ax + (bx - ax) * w, y]
    w = (u - 2.5) / 1.5
    ax2 = anchor[0] + step_east * (k + 1) - staging
    return [bx + (ax2 - bx) * w, y]
