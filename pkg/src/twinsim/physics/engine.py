"""Stepping façade: backend selection, wrench plumbing, divergence checks.

All operations are pure: they copy the incoming WorldState and return the
successor, so callers can hold onto any state snapshot.  The kernel backend is
chosen once at import: the compiled extension when available, the interpreted
module otherwise or when TWINSIM_FORCE_PYTHON is set.  Both run identical
source, so trajectories agree bitwise (covered by tests).
"""

from __future__ import annotations

import os
import threading

import numpy as np

from twinsim.physics.state import (
    SimulationDivergedError,
    UnknownBodyError,
    WorldState,
)


def _load_backend():
    if os.environ.get("TWINSIM_FORCE_PYTHON"):
        from twinsim.physics import _kernels_impl

        return _kernels_impl, "python"
    try:
        from twinsim.physics import _kernels as mod
    except ImportError:
        from twinsim.physics import _kernels_impl as mod
    return mod, ("compiled" if getattr(mod, "COMPILED", False) else "python")


_KERNEL, _BACKEND_NAME = _load_backend()
_tls = threading.local()


def backend_name() -> str:
    return _BACKEND_NAME


def kernel_module():
    return _KERNEL


class _Scratch:
    """Per-thread, per-model reusable work arrays for the kernel."""

    def __init__(self, model):
        n = model.num_bodies
        ns = len(model.sphere_body)
        cap = ns + (ns * (ns - 1)) // 2
        self.model = model
        self.pos_prev = np.zeros((n, 3))
        self.quat_prev = np.zeros((n, 4))
        self.ext_force0 = np.zeros((n, 3))
        self.ext_torque0 = np.zeros((n, 3))
        self.centers = np.zeros((ns, 3))
        self.con_a = np.zeros(cap, dtype=np.int32)
        self.con_b = np.zeros(cap, dtype=np.int32)
        self.con_sa = np.zeros(cap, dtype=np.int32)
        self.con_sb = np.zeros(cap, dtype=np.int32)
        self.con_lam_n = np.zeros(cap)
        self.con_lam_t = np.zeros(cap)
        self.con_anch_a = np.zeros((cap, 3))
        self.con_anch_b = np.zeros((cap, 3))
        self.con_prev_a = np.zeros((cap, 3))
        self.con_prev_b = np.zeros((cap, 3))
        self.con_vn0 = np.zeros(cap)
        self.con_mu = np.zeros(cap)
        self.con_e = np.zeros(cap)
        self.con_slip = np.zeros(cap, dtype=np.uint8)
        self.tmp = np.zeros(16)
        self.diag = np.zeros(2)


def _scratch_for(model) -> _Scratch:
    cache = getattr(_tls, "cache", None)
    if cache is None:
        cache = {}
        _tls.cache = cache
    entry = cache.get(id(model))
    if entry is None or entry.model is not model:
        entry = _Scratch(model)
        cache[id(model)] = entry
    return entry


def step(world: WorldState, u=None) -> WorldState:
    """Advance one fixed timestep, consuming pending and supplied wrenches."""
    m = world.model
    w = world.copy()
    if u is not None:
        wrenches = getattr(u, "wrenches", u)
        for body_id, (force, torque) in wrenches.items():
            i = w.body_index(body_id)
            w.pending_force[i] += np.asarray(force, dtype=np.float64)
            w.pending_torque[i] += np.asarray(torque, dtype=np.float64)
    s = _scratch_for(m)
    _KERNEL.step_world(
        m.inv_mass, m.inertia, m.inv_inertia, m.gravity_scale, m.friction,
        m.restitution, m.plane_collide, m.sphere_body, m.sphere_local,
        m.sphere_radius, m.pair_skip, m.joint_type, m.joint_parent,
        m.joint_child, m.joint_axis, m.joint_anchor_p, m.joint_anchor_c,
        m.joint_lo, m.joint_hi, m.joint_kp, m.joint_kd,
        m.dt, m.gravity[0], m.gravity[1], m.gravity[2], m.iterations,
        m.contact_margin, m.contact_compliance, m.plane_z, m.plane_friction,
        m.plane_restitution,
        w.pos, w.quat, w.vel, w.omega, w.joint_q, w.joint_qdot, w.joint_qdes,
        w.pending_force, w.pending_torque, s.ext_force0, s.ext_torque0,
        s.pos_prev, s.quat_prev, s.centers, s.con_a, s.con_b, s.con_sa,
        s.con_sb, s.con_lam_n, s.con_lam_t, s.con_anch_a, s.con_anch_b,
        s.con_prev_a, s.con_prev_b, s.con_vn0, s.con_mu, s.con_e, s.con_slip,
        w.fric_anchor, w.fric_flag, s.tmp,
        s.diag,
    )
    w.pending_force[:] = 0.0
    w.pending_torque[:] = 0.0
    w.time = world.time + m.dt
    w.max_penetration = float(s.diag[0])
    w.max_joint_residual = float(s.diag[1])
    if not w.is_finite():
        raise SimulationDivergedError(
            f"non-finite state after step at t={world.time:.4f}", world)
    return w


def apply_wrench(world: WorldState, body_id: str, force, torque) -> WorldState:
    """Queue a wrench on a body; it acts during the next step only."""
    w = world.copy()
    i = w.body_index(body_id)
    w.pending_force[i] += np.asarray(force, dtype=np.float64)
    w.pending_torque[i] += np.asarray(torque, dtype=np.float64)
    return w


def set_joint_target(world: WorldState, q_prime) -> WorldState:
    """Set the PD setpoint, clamped to joint limits."""
    q_prime = np.asarray(q_prime, dtype=np.float64)
    m = world.model
    if q_prime.shape != (m.num_joints,):
        raise ValueError(
            f"expected {m.num_joints} joint targets, got shape {q_prime.shape}")
    w = world.copy()
    w.joint_qdes = np.clip(q_prime, m.joint_lo, m.joint_hi)
    return w


def clamp_to_plane(target, workspace) -> np.ndarray:
    """Project a planar target into the workspace rectangle, componentwise."""
    xmin, ymin, xmax, ymax = workspace
    t = np.asarray(target, dtype=np.float64)
    return np.array([min(max(t[0], xmin), xmax), min(max(t[1], ymin), ymax)])


def ee_position(world: WorldState) -> np.ndarray:
    """World xy of the end-effector link."""
    i = world.body_index(world.model.robot.end_effector_link)
    return world.pos[i, :2].copy()


__all__ = [
    "apply_wrench",
    "backend_name",
    "clamp_to_plane",
    "ee_position",
    "kernel_module",
    "set_joint_target",
    "step",
    "SimulationDivergedError",
    "UnknownBodyError",
]
