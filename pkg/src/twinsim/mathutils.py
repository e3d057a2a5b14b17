"""Quaternion and planar-pose helpers shared across the simulator.

Quaternions are stored (w, x, y, z) as float64 numpy arrays. All functions are
pure and allocation-light; the physics hot loop has its own scalar kernels and
does not call into this module.
"""

from __future__ import annotations

import math

import numpy as np

QUAT_IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = math.sqrt(float(np.dot(q, q)))
    if n == 0.0:
        return QUAT_IDENTITY.copy()
    return q / n


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector v by unit quaternion q (no trig)."""
    u = q[1:]
    w = q[0]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_rotate_inv(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    return quat_rotate(quat_conj(q), v)


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    n = math.sqrt(float(np.dot(axis, axis)))
    if n == 0.0:
        return QUAT_IDENTITY.copy()
    half = 0.5 * angle
    s = math.sin(half) / n
    return np.array([math.cos(half), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_to_axis_angle(q: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle) of q, using the shortest arc."""
    if q[0] < 0.0:
        q = -q
    vn = math.sqrt(float(np.dot(q[1:], q[1:])))
    if vn < 1e-15:
        return np.zeros(3)
    angle = 2.0 * math.atan2(vn, float(q[0]))
    return q[1:] * (angle / vn)


def quat_from_yaw(yaw: float) -> np.ndarray:
    return np.array([math.cos(0.5 * yaw), 0.0, 0.0, math.sin(0.5 * yaw)])


def quat_yaw(q: np.ndarray) -> float:
    """Yaw (rotation about +z) of q; exact for planar rotations."""
    siny = 2.0 * (q[0] * q[3] + q[1] * q[2])
    cosy = 1.0 - 2.0 * (q[2] * q[2] + q[3] * q[3])
    return math.atan2(siny, cosy)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


def se2_error(pose_xyyaw: np.ndarray, target_xyyaw: np.ndarray) -> tuple[float, float]:
    """(position error m, |yaw error| rad) between two planar poses."""
    dp = math.hypot(
        float(pose_xyyaw[0] - target_xyyaw[0]), float(pose_xyyaw[1] - target_xyyaw[1])
    )
    dyaw = abs(wrap_angle(float(pose_xyyaw[2] - target_xyyaw[2])))
    return dp, dyaw


def stable_hash_u64(*parts) -> int:
    """Deterministic 64-bit hash of a tuple of ints/floats/strings.

    Used to derive per-episode and per-tick seeds; stable across processes and
    runs (unlike builtin hash).
    """
    import hashlib

    h = hashlib.sha256(repr(tuple(parts)).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "little")
