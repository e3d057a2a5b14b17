"""World state containers for the rigid-body simulator.

The stepping kernels operate on flat float64 arrays (structure-of-arrays), so
``WorldState`` stores the dynamic quantities as numpy arrays indexed by body
and exposes ``Body``/``RobotState`` snapshots for inspection and serialization.
Static quantities (masses, sphere layout, joints, solver parameters) live in a
shared immutable ``SceneModel``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from twinsim.mathutils import quat_normalize

PRISMATIC = 0
REVOLUTE = 1

_JOINT_TYPE_NAMES = {"prismatic": PRISMATIC, "revolute": REVOLUTE}


class PhysicsError(Exception):
    pass


class SceneConstructionError(PhysicsError):
    pass


class SimulationDivergedError(PhysicsError):
    """Raised when a step produces non-finite state; carries the last finite one."""

    def __init__(self, message: str, last_state: "WorldState"):
        super().__init__(message)
        self.last_state = last_state


class UnknownBodyError(PhysicsError):
    pass


@dataclass
class Pose:
    position: np.ndarray  # (3,) meters
    orientation: np.ndarray  # (4,) unit quaternion (w, x, y, z)

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.orientation = quat_normalize(np.asarray(self.orientation, dtype=np.float64))

    def copy(self) -> "Pose":
        return Pose(self.position.copy(), self.orientation.copy())


@dataclass
class Body:
    """Snapshot view of one rigid body (sphere compound)."""

    id: str
    pose: Pose
    linear_velocity: np.ndarray
    angular_velocity: np.ndarray
    mass: float
    inertia: np.ndarray  # (3,3) about the COM, body frame
    spheres: list  # [(offset (3,), radius), ...] in body frame
    color: np.ndarray  # (k,3) float in [0,1], one row per sphere
    gravity_enabled: bool
    friction: float
    restitution: float


@dataclass
class JointSpec:
    name: str
    joint_type: int  # PRISMATIC | REVOLUTE
    parent: str | None  # None = world
    child: str
    axis: np.ndarray  # unit, parent frame
    anchor_parent: np.ndarray  # parent frame (world frame if parent is None)
    anchor_child: np.ndarray  # child frame
    limits: tuple  # (lo, hi)
    kp: float
    kd: float


@dataclass
class RobotModel:
    d: int
    joints: list  # ordered JointSpec, one per DoF
    links: list  # body ids
    end_effector_link: str

    def validate(self, model: "SceneModel") -> None:
        children = set()
        for j in self.joints:
            lo, hi = j.limits
            if not lo < hi:
                raise SceneConstructionError(f"joint {j.name}: limit lo {lo} >= hi {hi}")
            if j.child in children:
                raise SceneConstructionError(f"joint chain is not a tree at {j.child}")
            children.add(j.child)
        for bid in self.links:
            if model.gravity_scale[model.body_index[bid]] != 0.0:
                raise SceneConstructionError(f"robot link {bid} must have gravity disabled")
        if self.end_effector_link not in self.links:
            raise SceneConstructionError("end effector must be a robot link")


@dataclass
class RobotState:
    q: np.ndarray
    qdot: np.ndarray
    q_desired: np.ndarray


@dataclass(eq=False)
class SceneModel:
    """Immutable static scene data shared by every WorldState it spawns."""

    body_ids: tuple
    body_index: dict
    mass: np.ndarray  # (n,)
    inv_mass: np.ndarray  # (n,)
    inertia: np.ndarray  # (n,3,3) body frame, about COM
    inv_inertia: np.ndarray  # (n,3,3)
    gravity_scale: np.ndarray  # (n,) 1.0 or 0.0
    friction: np.ndarray  # (n,)
    restitution: np.ndarray  # (n,)
    plane_collide: np.ndarray  # (n,) uint8
    sphere_body: np.ndarray  # (s,) int32
    sphere_local: np.ndarray  # (s,3)
    sphere_radius: np.ndarray  # (s,)
    sphere_color: np.ndarray  # (s,3) float in [0,1]
    pair_skip: np.ndarray  # (n,n) uint8, 1 = never collide
    # joints (flattened robot description)
    joint_type: np.ndarray  # (j,) int32
    joint_parent: np.ndarray  # (j,) int32, -1 = world
    joint_child: np.ndarray  # (j,) int32
    joint_axis: np.ndarray  # (j,3)
    joint_anchor_p: np.ndarray  # (j,3)
    joint_anchor_c: np.ndarray  # (j,3)
    joint_lo: np.ndarray  # (j,)
    joint_hi: np.ndarray  # (j,)
    joint_kp: np.ndarray  # (j,)
    joint_kd: np.ndarray  # (j,)
    robot: RobotModel
    # solver / environment parameters
    dt: float
    gravity: np.ndarray  # (3,)
    iterations: int
    contact_margin: float
    contact_compliance: float
    plane_z: float
    plane_friction: float
    plane_restitution: float
    plane_extent: float  # half-extent of the square table top (render/workspace)
    workspace: tuple  # (xmin, ymin, xmax, ymax) pusher workspace
    target_pose: np.ndarray  # (3,) T-block target (x, y, yaw)
    tblock_id: str = "tblock"
    pusher_id: str = "pusher"
    config_digest: str = ""
    config_json: str = ""
    cameras: dict = field(default_factory=dict)

    @property
    def num_bodies(self) -> int:
        return len(self.body_ids)

    @property
    def num_joints(self) -> int:
        return len(self.joint_type)

    def body_sphere_slice(self, body_idx: int) -> np.ndarray:
        return np.flatnonzero(self.sphere_body == body_idx)


class WorldState:
    """Dynamic simulator state s_t plus robot state r_t at a fixed 60 Hz step."""

    __slots__ = (
        "model",
        "time",
        "pos",
        "quat",
        "vel",
        "omega",
        "joint_q",
        "joint_qdot",
        "joint_qdes",
        "pending_force",
        "pending_torque",
        "fric_anchor",
        "fric_flag",
        "max_penetration",
        "max_joint_residual",
    )

    def __init__(self, model: SceneModel, time: float, pos, quat, vel, omega,
                 joint_q, joint_qdot, joint_qdes):
        self.model = model
        self.time = float(time)
        self.pos = np.ascontiguousarray(pos, dtype=np.float64)
        self.quat = np.ascontiguousarray(quat, dtype=np.float64)
        self.vel = np.ascontiguousarray(vel, dtype=np.float64)
        self.omega = np.ascontiguousarray(omega, dtype=np.float64)
        self.joint_q = np.ascontiguousarray(joint_q, dtype=np.float64)
        self.joint_qdot = np.ascontiguousarray(joint_qdot, dtype=np.float64)
        self.joint_qdes = np.ascontiguousarray(joint_qdes, dtype=np.float64)
        n = model.num_bodies
        ns = len(model.sphere_body)
        self.pending_force = np.zeros((n, 3))
        self.pending_torque = np.zeros((n, 3))
        # world-frame static friction pins, one slot per collision sphere
        self.fric_anchor = np.zeros((ns, 3))
        self.fric_flag = np.zeros(ns, dtype=np.uint8)
        self.max_penetration = 0.0
        self.max_joint_residual = 0.0

    @property
    def dt(self) -> float:
        return self.model.dt

    def copy(self) -> "WorldState":
        w = WorldState(
            self.model,
            self.time,
            self.pos.copy(),
            self.quat.copy(),
            self.vel.copy(),
            self.omega.copy(),
            self.joint_q.copy(),
            self.joint_qdot.copy(),
            self.joint_qdes.copy(),
        )
        w.pending_force[:] = self.pending_force
        w.pending_torque[:] = self.pending_torque
        w.fric_anchor[:] = self.fric_anchor
        w.fric_flag[:] = self.fric_flag
        w.max_penetration = self.max_penetration
        w.max_joint_residual = self.max_joint_residual
        return w

    def body_index(self, body_id: str) -> int:
        try:
            return self.model.body_index[body_id]
        except KeyError:
            raise UnknownBodyError(f"unknown body id {body_id!r}") from None

    def body_pose(self, body_id: str) -> Pose:
        i = self.body_index(body_id)
        return Pose(self.pos[i].copy(), self.quat[i].copy())

    @property
    def bodies(self) -> list:
        m = self.model
        out = []
        for i, bid in enumerate(m.body_ids):
            sel = m.body_sphere_slice(i)
            out.append(
                Body(
                    id=bid,
                    pose=Pose(self.pos[i].copy(), self.quat[i].copy()),
                    linear_velocity=self.vel[i].copy(),
                    angular_velocity=self.omega[i].copy(),
                    mass=float(m.mass[i]),
                    inertia=m.inertia[i].copy(),
                    spheres=[(m.sphere_local[k].copy(), float(m.sphere_radius[k])) for k in sel],
                    color=m.sphere_color[sel].copy(),
                    gravity_enabled=bool(m.gravity_scale[i] != 0.0),
                    friction=float(m.friction[i]),
                    restitution=float(m.restitution[i]),
                )
            )
        return out

    @property
    def robot(self) -> RobotState:
        return RobotState(self.joint_q.copy(), self.joint_qdot.copy(), self.joint_qdes.copy())

    def sphere_centers(self) -> np.ndarray:
        """World-frame centers of every collision sphere, (s,3)."""
        m = self.model
        centers = np.empty((len(m.sphere_body), 3))
        for k in range(len(m.sphere_body)):
            b = m.sphere_body[k]
            q = self.quat[b]
            u = q[1:]
            v = m.sphere_local[k]
            t = 2.0 * np.cross(u, v)
            centers[k] = self.pos[b] + v + q[0] * t + np.cross(u, t)
        return centers

    def is_finite(self) -> bool:
        return bool(
            np.isfinite(self.pos).all()
            and np.isfinite(self.quat).all()
            and np.isfinite(self.vel).all()
            and np.isfinite(self.omega).all()
            and np.isfinite(self.joint_q).all()
        )

    def equals(self, other: "WorldState") -> bool:
        """Bitwise equality of all dynamic state."""
        return (
            self.time == other.time
            and np.array_equal(self.pos, other.pos)
            and np.array_equal(self.quat, other.quat)
            and np.array_equal(self.vel, other.vel)
            and np.array_equal(self.omega, other.omega)
            and np.array_equal(self.joint_q, other.joint_q)
            and np.array_equal(self.joint_qdot, other.joint_qdot)
            and np.array_equal(self.joint_qdes, other.joint_qdes)
            and np.array_equal(self.fric_anchor, other.fric_anchor)
            and np.array_equal(self.fric_flag, other.fric_flag)
        )
