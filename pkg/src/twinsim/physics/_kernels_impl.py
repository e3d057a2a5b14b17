"""Position-based rigid-body stepping kernel (sphere compounds + joints).

One source, two backends: this module runs as plain Python, and setup.py also
compiles a copy of it (as ``twinsim.physics._kernels``) with Cython in
pure-Python mode.  Both paths execute the same IEEE-754 double operations in
the same order, so trajectories agree bitwise.  Keep the math scalar and
sequential; no numpy calls, no `**`, no reductions with library-defined order.

Step layout per call (one fixed timestep):
  1. joint PD servos -> external force/torque accumulators
  2. semi-implicit integration of velocities and poses (with gyroscopic term)
  3. contact detection against the ground plane and between sphere pairs
  4. `iterations` Gauss-Seidel sweeps: contact projection (normal + static
     friction, clamped by mu * lambda_n) then joint projection
  5. velocity reconciliation from pose deltas
  6. one velocity sweep for restitution and dynamic friction
  7. joint coordinate/rate measurement, penetration + joint residual diagnostics
"""

try:
    import cython
except ImportError:  # minimal stand-in so the interpreted path has no hard dep
    from twinsim.physics import _cython_shim as cython

if cython.compiled:
    from cython.cimports.libc.math import atan2, sqrt
else:
    from math import atan2, sqrt

COMPILED = cython.compiled

PRISMATIC: cython.int = 0
REVOLUTE: cython.int = 1


@cython.cfunc
@cython.boundscheck(False)
@cython.wraparound(False)
def _rot_into(qw: cython.double, qx: cython.double, qy: cython.double,
              qz: cython.double, vx: cython.double, vy: cython.double,
              vz: cython.double, out: cython.double[::1], o: cython.Py_ssize_t) -> cython.void:
    """out[o:o+3] = R(q) v without trig: v + 2w(u x v) + 2(u x (u x v))."""
    tx: cython.double = 2.0 * (qy * vz - qz * vy)
    ty: cython.double = 2.0 * (qz * vx - qx * vz)
    tz: cython.double = 2.0 * (qx * vy - qy * vx)
    out[o] = vx + qw * tx + (qy * tz - qz * ty)
    out[o + 1] = vy + qw * ty + (qz * tx - qx * tz)
    out[o + 2] = vz + qw * tz + (qx * ty - qy * tx)


@cython.cfunc
@cython.boundscheck(False)
@cython.wraparound(False)
def _rot_inv_into(qw: cython.double, qx: cython.double, qy: cython.double,
                  qz: cython.double, vx: cython.double, vy: cython.double,
                  vz: cython.double, out: cython.double[::1], o: cython.Py_ssize_t) -> cython.void:
    _rot_into(qw, -qx, -qy, -qz, vx, vy, vz, out, o)


@cython.cfunc
@cython.boundscheck(False)
@cython.wraparound(False)
def _inv_inertia_world_into(qw: cython.double, qx: cython.double, qy: cython.double,
                            qz: cython.double, inv_inertia: cython.double[:, :, ::1],
                            i: cython.Py_ssize_t, vx: cython.double, vy: cython.double,
                            vz: cython.double, out: cython.double[::1],
                            o: cython.Py_ssize_t) -> cython.void:
    """out[o:o+3] = R I_body^-1 R^T v, i.e. world-frame inverse inertia times v."""
    _rot_inv_into(qw, qx, qy, qz, vx, vy, vz, out, o)
    bx: cython.double = out[o]
    by: cython.double = out[o + 1]
    bz: cython.double = out[o + 2]
    cx: cython.double = inv_inertia[i, 0, 0] * bx + inv_inertia[i, 0, 1] * by + inv_inertia[i, 0, 2] * bz
    cy: cython.double = inv_inertia[i, 1, 0] * bx + inv_inertia[i, 1, 1] * by + inv_inertia[i, 1, 2] * bz
    cz: cython.double = inv_inertia[i, 2, 0] * bx + inv_inertia[i, 2, 1] * by + inv_inertia[i, 2, 2] * bz
    _rot_into(qw, qx, qy, qz, cx, cy, cz, out, o)


@cython.cfunc
@cython.boundscheck(False)
@cython.wraparound(False)
def _normalize_quat(quat: cython.double[:, ::1], i: cython.Py_ssize_t) -> cython.void:
    qw: cython.double = quat[i, 0]
    qx: cython.double = quat[i, 1]
    qy: cython.double = quat[i, 2]
    qz: cython.double = quat[i, 3]
    inv: cython.double = 1.0 / sqrt(qw * qw + qx * qx + qy * qy + qz * qz)
    quat[i, 0] = qw * inv
    quat[i, 1] = qx * inv
    quat[i, 2] = qy * inv
    quat[i, 3] = qz * inv


@cython.cfunc
@cython.boundscheck(False)
@cython.wraparound(False)
def _add_rotation(quat: cython.double[:, ::1], i: cython.Py_ssize_t, scale: cython.double,
                  wx: cython.double, wy: cython.double, wz: cython.double) -> cython.void:
    """quat[i] += scale * 0.5 * (0, w) * quat[i]; renormalize."""
    qw: cython.double = quat[i, 0]
    qx: cython.double = quat[i, 1]
    qy: cython.double = quat[i, 2]
    qz: cython.double = quat[i, 3]
    h: cython.double = 0.5 * scale
    quat[i, 0] = qw + h * (-(wx * qx + wy * qy + wz * qz))
    quat[i, 1] = qx + h * (wx * qw + (wy * qz - wz * qy))
    quat[i, 2] = qy + h * (wy * qw + (wz * qx - wx * qz))
    quat[i, 3] = qz + h * (wz * qw + (wx * qy - wy * qx))
    _normalize_quat(quat, i)


@cython.cfunc
@cython.boundscheck(False)
@cython.wraparound(False)
def _apply_impulse(pos: cython.double[:, ::1], quat: cython.double[:, ::1],
                   inv_mass: cython.double[::1], inv_inertia: cython.double[:, :, ::1],
                   i: cython.Py_ssize_t, px: cython.double, py: cython.double,
                   pz: cython.double, rx: cython.double, ry: cython.double,
                   rz: cython.double, tmp: cython.double[::1]) -> cython.void:
    """Positional impulse p applied at COM offset r: shift pos, rotate quat."""
    im: cython.double = inv_mass[i]
    pos[i, 0] = pos[i, 0] + px * im
    pos[i, 1] = pos[i, 1] + py * im
    pos[i, 2] = pos[i, 2] + pz * im
    cx: cython.double = ry * pz - rz * py
    cy: cython.double = rz * px - rx * pz
    cz: cython.double = rx * py - ry * px
    _inv_inertia_world_into(quat[i, 0], quat[i, 1], quat[i, 2], quat[i, 3],
                            inv_inertia, i, cx, cy, cz, tmp, 0)
    _add_rotation(quat, i, 1.0, tmp[0], tmp[1], tmp[2])


@cython.cfunc
@cython.boundscheck(False)
@cython.wraparound(False)
def _generalized_mass(inv_mass: cython.double[::1], inv_inertia: cython.double[:, :, ::1],
                      quat: cython.double[:, ::1], i: cython.Py_ssize_t,
                      nx: cython.double, ny: cython.double, nz: cython.double,
                      rx: cython.double, ry: cython.double, rz: cython.double,
                      tmp: cython.double[::1]) -> cython.double:
    """w = m^-1 + (r x n)^T I_w^-1 (r x n) for a unit direction n at offset r."""
    cx: cython.double = ry * nz - rz * ny
    cy: cython.double = rz * nx - rx * nz
    cz: cython.double = rx * ny - ry * nx
    _inv_inertia_world_into(quat[i, 0], quat[i, 1], quat[i, 2], quat[i, 3],
                            inv_inertia, i, cx, cy, cz, tmp, 0)
    return inv_mass[i] + (cx * tmp[0] + cy * tmp[1] + cz * tmp[2])


@cython.cfunc
@cython.boundscheck(False)
@cython.wraparound(False)
def _angular_mass(inv_inertia: cython.double[:, :, ::1], quat: cython.double[:, ::1],
                  i: cython.Py_ssize_t, nx: cython.double, ny: cython.double,
                  nz: cython.double, tmp: cython.double[::1]) -> cython.double:
    """w = n^T I_w^-1 n for a unit rotation axis n."""
    _inv_inertia_world_into(quat[i, 0], quat[i, 1], quat[i, 2], quat[i, 3],
                            inv_inertia, i, nx, ny, nz, tmp, 0)
    return nx * tmp[0] + ny * tmp[1] + nz * tmp[2]


@cython.cfunc
@cython.boundscheck(False)
@cython.wraparound(False)
def _velocity_impulse(vel: cython.double[:, ::1], omega: cython.double[:, ::1],
                      quat: cython.double[:, ::1], inv_mass: cython.double[::1],
                      inv_inertia: cython.double[:, :, ::1], i: cython.Py_ssize_t,
                      px: cython.double, py: cython.double, pz: cython.double,
                      rx: cython.double, ry: cython.double, rz: cython.double,
                      tmp: cython.double[::1]) -> cython.void:
    im: cython.double = inv_mass[i]
    vel[i, 0] = vel[i, 0] + px * im
    vel[i, 1] = vel[i, 1] + py * im
    vel[i, 2] = vel[i, 2] + pz * im
    cx: cython.double = ry * pz - rz * py
    cy: cython.double = rz * px - rx * pz
    cz: cython.double = rx * py - ry * px
    _inv_inertia_world_into(quat[i, 0], quat[i, 1], quat[i, 2], quat[i, 3],
                            inv_inertia, i, cx, cy, cz, tmp, 0)
    omega[i, 0] = omega[i, 0] + tmp[0]
    omega[i, 1] = omega[i, 1] + tmp[1]
    omega[i, 2] = omega[i, 2] + tmp[2]


@cython.cfunc
@cython.boundscheck(False)
@cython.wraparound(False)
def _measure_joint_into(j: cython.Py_ssize_t, joint_type: cython.int[::1],
                        joint_parent: cython.int[::1], joint_child: cython.int[::1],
                        joint_axis: cython.double[:, ::1], joint_anchor_p: cython.double[:, ::1],
                        joint_anchor_c: cython.double[:, ::1], pos: cython.double[:, ::1],
                        quat: cython.double[:, ::1], vel: cython.double[:, ::1],
                        omega: cython.double[:, ::1], tmp: cython.double[::1],
                        out: cython.double[::1], o: cython.Py_ssize_t) -> cython.void:
    """out[o] = joint coordinate, out[o+1] = joint rate, from body states."""
    p: cython.Py_ssize_t = joint_parent[j]
    c: cython.Py_ssize_t = joint_child[j]
    axx: cython.double = joint_axis[j, 0]
    axy: cython.double = joint_axis[j, 1]
    axz: cython.double = joint_axis[j, 2]
    awx: cython.double
    awy: cython.double
    awz: cython.double
    pax: cython.double
    pay: cython.double
    paz: cython.double
    vpx: cython.double
    vpy: cython.double
    vpz: cython.double
    if p >= 0:
        _rot_into(quat[p, 0], quat[p, 1], quat[p, 2], quat[p, 3], axx, axy, axz, tmp, 3)
        awx = tmp[3]
        awy = tmp[4]
        awz = tmp[5]
        _rot_into(quat[p, 0], quat[p, 1], quat[p, 2], quat[p, 3],
                  joint_anchor_p[j, 0], joint_anchor_p[j, 1], joint_anchor_p[j, 2], tmp, 3)
        pax = pos[p, 0] + tmp[3]
        pay = pos[p, 1] + tmp[4]
        paz = pos[p, 2] + tmp[5]
        vpx = vel[p, 0] + (omega[p, 1] * tmp[5] - omega[p, 2] * tmp[4])
        vpy = vel[p, 1] + (omega[p, 2] * tmp[3] - omega[p, 0] * tmp[5])
        vpz = vel[p, 2] + (omega[p, 0] * tmp[4] - omega[p, 1] * tmp[3])
    else:
        awx = axx
        awy = axy
        awz = axz
        pax = joint_anchor_p[j, 0]
        pay = joint_anchor_p[j, 1]
        paz = joint_anchor_p[j, 2]
        vpx = 0.0
        vpy = 0.0
        vpz = 0.0
    _rot_into(quat[c, 0], quat[c, 1], quat[c, 2], quat[c, 3],
              joint_anchor_c[j, 0], joint_anchor_c[j, 1], joint_anchor_c[j, 2], tmp, 3)
    pcx: cython.double = pos[c, 0] + tmp[3]
    pcy: cython.double = pos[c, 1] + tmp[4]
    pcz: cython.double = pos[c, 2] + tmp[5]
    vcx: cython.double = vel[c, 0] + (omega[c, 1] * tmp[5] - omega[c, 2] * tmp[4])
    vcy: cython.double = vel[c, 1] + (omega[c, 2] * tmp[3] - omega[c, 0] * tmp[5])
    vcz: cython.double = vel[c, 2] + (omega[c, 0] * tmp[4] - omega[c, 1] * tmp[3])
    if joint_type[j] == PRISMATIC:
        out[o] = awx * (pcx - pax) + awy * (pcy - pay) + awz * (pcz - paz)
        out[o + 1] = awx * (vcx - vpx) + awy * (vcy - vpy) + awz * (vcz - vpz)
    else:
        # twist of child relative to parent about the hinge axis
        rw: cython.double
        rx: cython.double
        ry: cython.double
        rz: cython.double
        if p >= 0:
            pw: cython.double = quat[p, 0]
            px: cython.double = -quat[p, 1]
            py: cython.double = -quat[p, 2]
            pz: cython.double = -quat[p, 3]
            cw: cython.double = quat[c, 0]
            cx: cython.double = quat[c, 1]
            cy: cython.double = quat[c, 2]
            cz: cython.double = quat[c, 3]
            rw = pw * cw - px * cx - py * cy - pz * cz
            rx = pw * cx + px * cw + py * cz - pz * cy
            ry = pw * cy - px * cz + py * cw + pz * cx
            rz = pw * cz + px * cy - py * cx + pz * cw
        else:
            rw = quat[c, 0]
            rx = quat[c, 1]
            ry = quat[c, 2]
            rz = quat[c, 3]
        tw: cython.double = rx * axx + ry * axy + rz * axz
        out[o] = 2.0 * atan2(tw, rw)
        wrx: cython.double = omega[c, 0]
        wry: cython.double = omega[c, 1]
        wrz: cython.double = omega[c, 2]
        if p >= 0:
            wrx = wrx - omega[p, 0]
            wry = wry - omega[p, 1]
            wrz = wrz - omega[p, 2]
        out[o + 1] = awx * wrx + awy * wry + awz * wrz


@cython.boundscheck(False)
@cython.wraparound(False)
@cython.cdivision(True)
def step_world(inv_mass: cython.double[::1],
               inertia: cython.double[:, :, ::1],
               inv_inertia: cython.double[:, :, ::1],
               gravity_scale: cython.double[::1],
               friction: cython.double[::1],
               restitution: cython.double[::1],
               plane_collide: cython.uchar[::1],
               sphere_body: cython.int[::1],
               sphere_local: cython.double[:, ::1],
               sphere_radius: cython.double[::1],
               pair_skip: cython.uchar[:, ::1],
               joint_type: cython.int[::1],
               joint_parent: cython.int[::1],
               joint_child: cython.int[::1],
               joint_axis: cython.double[:, ::1],
               joint_anchor_p: cython.double[:, ::1],
               joint_anchor_c: cython.double[:, ::1],
               joint_lo: cython.double[::1],
               joint_hi: cython.double[::1],
               joint_kp: cython.double[::1],
               joint_kd: cython.double[::1],
               dt: cython.double,
               gx: cython.double,
               gy: cython.double,
               gz: cython.double,
               iterations: cython.int,
               contact_margin: cython.double,
               contact_compliance: cython.double,
               plane_z: cython.double,
               plane_friction: cython.double,
               plane_restitution: cython.double,
               pos: cython.double[:, ::1],
               quat: cython.double[:, ::1],
               vel: cython.double[:, ::1],
               omega: cython.double[:, ::1],
               joint_q: cython.double[::1],
               joint_qdot: cython.double[::1],
               joint_qdes: cython.double[::1],
               ext_force: cython.double[:, ::1],
               ext_torque: cython.double[:, ::1],
               ext_force0: cython.double[:, ::1],
               ext_torque0: cython.double[:, ::1],
               pos_prev: cython.double[:, ::1],
               quat_prev: cython.double[:, ::1],
               centers: cython.double[:, ::1],
               con_a: cython.int[::1],
               con_b: cython.int[::1],
               con_sa: cython.int[::1],
               con_sb: cython.int[::1],
               con_lam_n: cython.double[::1],
               con_lam_t: cython.double[::1],
               con_anch_a: cython.double[:, ::1],
               con_anch_b: cython.double[:, ::1],
               con_prev_a: cython.double[:, ::1],
               con_prev_b: cython.double[:, ::1],
               con_vn0: cython.double[::1],
               con_mu: cython.double[::1],
               con_e: cython.double[::1],
               con_slip: cython.uchar[::1],
               fric_anchor: cython.double[:, ::1],
               fric_flag: cython.uchar[::1],
               tmp: cython.double[::1],
               diag: cython.double[::1]) -> cython.int:
    n: cython.Py_ssize_t = pos.shape[0]
    ns: cython.Py_ssize_t = sphere_body.shape[0]
    nj: cython.Py_ssize_t = joint_type.shape[0]
    i: cython.Py_ssize_t
    j: cython.Py_ssize_t
    k: cython.Py_ssize_t
    l: cython.Py_ssize_t
    ci: cython.Py_ssize_t
    sweep: cython.int
    b: cython.Py_ssize_t
    ba: cython.Py_ssize_t
    bb: cython.Py_ssize_t
    p: cython.Py_ssize_t
    c: cython.Py_ssize_t
    nsub: cython.int = iterations
    jp: cython.Py_ssize_t
    sub: cython.int
    if nsub < 1:
        nsub = 1
    dt_s: cython.double = dt / nsub

    # the frame integrates as several small substeps, each with one
    # projection pass; short substeps keep intra-step contact excursions
    # inside the static friction cones, which full-frame steps do not
    for sub in range(nsub):
        for i in range(n):
            ext_force0[i, 0] = 0.0
            ext_force0[i, 1] = 0.0
            ext_force0[i, 2] = 0.0
            ext_torque0[i, 0] = 0.0
            ext_torque0[i, 1] = 0.0
            ext_torque0[i, 2] = 0.0
        # ---- 0. remember start-of-step poses -------------------------------
        for i in range(n):
            pos_prev[i, 0] = pos[i, 0]
            pos_prev[i, 1] = pos[i, 1]
            pos_prev[i, 2] = pos[i, 2]
            quat_prev[i, 0] = quat[i, 0]
            quat_prev[i, 1] = quat[i, 1]
            quat_prev[i, 2] = quat[i, 2]
            quat_prev[i, 3] = quat[i, 3]

        # ---- 1. joint PD servos --------------------------------------------
        for j in range(nj):
            p = joint_parent[j]
            c = joint_child[j]
            _measure_joint_into(j, joint_type, joint_parent, joint_child, joint_axis,
                                joint_anchor_p, joint_anchor_c, pos, quat, vel, omega,
                                tmp, tmp, 6)
            drive: cython.double = joint_kp[j] * (joint_qdes[j] - tmp[6]) - joint_kd[j] * tmp[7]
            awx: cython.double
            awy: cython.double
            awz: cython.double
            if p >= 0:
                _rot_into(quat[p, 0], quat[p, 1], quat[p, 2], quat[p, 3],
                          joint_axis[j, 0], joint_axis[j, 1], joint_axis[j, 2], tmp, 0)
                awx = tmp[0]
                awy = tmp[1]
                awz = tmp[2]
            else:
                awx = joint_axis[j, 0]
                awy = joint_axis[j, 1]
                awz = joint_axis[j, 2]
            if joint_type[j] == PRISMATIC:
                fx: cython.double = drive * awx
                fy: cython.double = drive * awy
                fz: cython.double = drive * awz
                _rot_into(quat[c, 0], quat[c, 1], quat[c, 2], quat[c, 3],
                          joint_anchor_c[j, 0], joint_anchor_c[j, 1], joint_anchor_c[j, 2], tmp, 0)
                ext_force0[c, 0] = ext_force0[c, 0] + fx
                ext_force0[c, 1] = ext_force0[c, 1] + fy
                ext_force0[c, 2] = ext_force0[c, 2] + fz
                ext_torque0[c, 0] = ext_torque0[c, 0] + (tmp[1] * fz - tmp[2] * fy)
                ext_torque0[c, 1] = ext_torque0[c, 1] + (tmp[2] * fx - tmp[0] * fz)
                ext_torque0[c, 2] = ext_torque0[c, 2] + (tmp[0] * fy - tmp[1] * fx)
                if p >= 0:
                    _rot_into(quat[p, 0], quat[p, 1], quat[p, 2], quat[p, 3],
                              joint_anchor_p[j, 0], joint_anchor_p[j, 1], joint_anchor_p[j, 2], tmp, 0)
                    ext_force0[p, 0] = ext_force0[p, 0] - fx
                    ext_force0[p, 1] = ext_force0[p, 1] - fy
                    ext_force0[p, 2] = ext_force0[p, 2] - fz
                    ext_torque0[p, 0] = ext_torque0[p, 0] - (tmp[1] * fz - tmp[2] * fy)
                    ext_torque0[p, 1] = ext_torque0[p, 1] - (tmp[2] * fx - tmp[0] * fz)
                    ext_torque0[p, 2] = ext_torque0[p, 2] - (tmp[0] * fy - tmp[1] * fx)
            else:
                ext_torque0[c, 0] = ext_torque0[c, 0] + drive * awx
                ext_torque0[c, 1] = ext_torque0[c, 1] + drive * awy
                ext_torque0[c, 2] = ext_torque0[c, 2] + drive * awz
                if p >= 0:
                    ext_torque0[p, 0] = ext_torque0[p, 0] - drive * awx
                    ext_torque0[p, 1] = ext_torque0[p, 1] - drive * awy
                    ext_torque0[p, 2] = ext_torque0[p, 2] - drive * awz

        # ---- 2. semi-implicit prediction -----------------------------------
        for i in range(n):
            if inv_mass[i] == 0.0:
                continue
            gs: cython.double = gravity_scale[i]
            im: cython.double = inv_mass[i]
            vel[i, 0] = vel[i, 0] + dt_s * (gx * gs + (ext_force[i, 0] + ext_force0[i, 0]) * im)
            vel[i, 1] = vel[i, 1] + dt_s * (gy * gs + (ext_force[i, 1] + ext_force0[i, 1]) * im)
            vel[i, 2] = vel[i, 2] + dt_s * (gz * gs + (ext_force[i, 2] + ext_force0[i, 2]) * im)
            # gyroscopic update in the body frame: w += dt_s I^-1 (tau - w x (I w))
            _rot_inv_into(quat[i, 0], quat[i, 1], quat[i, 2], quat[i, 3],
                          omega[i, 0], omega[i, 1], omega[i, 2], tmp, 0)
            wbx: cython.double = tmp[0]
            wby: cython.double = tmp[1]
            wbz: cython.double = tmp[2]
            _rot_inv_into(quat[i, 0], quat[i, 1], quat[i, 2], quat[i, 3],
                          ext_torque[i, 0] + ext_torque0[i, 0],
                          ext_torque[i, 1] + ext_torque0[i, 1],
                          ext_torque[i, 2] + ext_torque0[i, 2], tmp, 0)
            hx: cython.double = inertia[i, 0, 0] * wbx + inertia[i, 0, 1] * wby + inertia[i, 0, 2] * wbz
            hy: cython.double = inertia[i, 1, 0] * wbx + inertia[i, 1, 1] * wby + inertia[i, 1, 2] * wbz
            hz: cython.double = inertia[i, 2, 0] * wbx + inertia[i, 2, 1] * wby + inertia[i, 2, 2] * wbz
            tbx: cython.double = tmp[0] - (wby * hz - wbz * hy)
            tby: cython.double = tmp[1] - (wbz * hx - wbx * hz)
            tbz: cython.double = tmp[2] - (wbx * hy - wby * hx)
            wbx = wbx + dt_s * (inv_inertia[i, 0, 0] * tbx + inv_inertia[i, 0, 1] * tby + inv_inertia[i, 0, 2] * tbz)
            wby = wby + dt_s * (inv_inertia[i, 1, 0] * tbx + inv_inertia[i, 1, 1] * tby + inv_inertia[i, 1, 2] * tbz)
            wbz = wbz + dt_s * (inv_inertia[i, 2, 0] * tbx + inv_inertia[i, 2, 1] * tby + inv_inertia[i, 2, 2] * tbz)
            _rot_into(quat[i, 0], quat[i, 1], quat[i, 2], quat[i, 3], wbx, wby, wbz, tmp, 0)
            omega[i, 0] = tmp[0]
            omega[i, 1] = tmp[1]
            omega[i, 2] = tmp[2]
            pos[i, 0] = pos[i, 0] + dt_s * vel[i, 0]
            pos[i, 1] = pos[i, 1] + dt_s * vel[i, 1]
            pos[i, 2] = pos[i, 2] + dt_s * vel[i, 2]
            _add_rotation(quat, i, dt_s, omega[i, 0], omega[i, 1], omega[i, 2])

        # ---- 3. contact detection at predicted poses -----------------------
        for k in range(ns):
            b = sphere_body[k]
            _rot_into(quat[b, 0], quat[b, 1], quat[b, 2], quat[b, 3],
                      sphere_local[k, 0], sphere_local[k, 1], sphere_local[k, 2], tmp, 0)
            centers[k, 0] = pos[b, 0] + tmp[0]
            centers[k, 1] = pos[b, 1] + tmp[1]
            centers[k, 2] = pos[b, 2] + tmp[2]
        ncon: cython.Py_ssize_t = 0
        for k in range(ns):
            b = sphere_body[k]
            if plane_collide[b] == 0 or inv_mass[b] == 0.0:
                continue
            rad: cython.double = sphere_radius[k]
            gap: cython.double = centers[k, 2] - rad - plane_z
            if gap < contact_margin:
                con_a[ncon] = b
                con_b[ncon] = -1
                con_sa[ncon] = k
                con_sb[ncon] = -1
                con_lam_n[ncon] = 0.0
                con_lam_t[ncon] = 0.0
                con_slip[ncon] = 0
                pxw: cython.double = centers[k, 0]
                pyw: cython.double = centers[k, 1]
                pzw: cython.double = centers[k, 2] - rad
                _rot_inv_into(quat[b, 0], quat[b, 1], quat[b, 2], quat[b, 3],
                              pxw - pos[b, 0], pyw - pos[b, 1], pzw - pos[b, 2], tmp, 0)
                con_anch_a[ncon, 0] = tmp[0]
                con_anch_a[ncon, 1] = tmp[1]
                con_anch_a[ncon, 2] = tmp[2]
                con_anch_b[ncon, 0] = 0.0
                con_anch_b[ncon, 1] = 0.0
                con_anch_b[ncon, 2] = 0.0
                # static friction pins the contact to a world-frame anchor that
                # persists across steps; without the pin, per-step solver bias
                # ratchets into slow lateral creep of resting bodies
                if fric_flag[k] == 0:
                    _rot_into(quat_prev[b, 0], quat_prev[b, 1], quat_prev[b, 2], quat_prev[b, 3],
                              tmp[0], tmp[1], tmp[2], tmp, 3)
                    fric_anchor[k, 0] = pos_prev[b, 0] + tmp[3]
                    fric_anchor[k, 1] = pos_prev[b, 1] + tmp[4]
                    fric_anchor[k, 2] = pos_prev[b, 2] + tmp[5]
                    fric_flag[k] = 1
                con_prev_a[ncon, 0] = fric_anchor[k, 0]
                con_prev_a[ncon, 1] = fric_anchor[k, 1]
                con_prev_a[ncon, 2] = fric_anchor[k, 2]
                con_prev_b[ncon, 0] = pxw
                con_prev_b[ncon, 1] = pyw
                con_prev_b[ncon, 2] = plane_z
                con_vn0[ncon] = vel[b, 2] + (omega[b, 0] * (pyw - pos[b, 1]) - omega[b, 1] * (pxw - pos[b, 0]))
                con_mu[ncon] = 0.5 * (friction[b] + plane_friction)
                con_e[ncon] = restitution[b] if restitution[b] > plane_restitution else plane_restitution
                ncon = ncon + 1
            else:
                fric_flag[k] = 0
        for k in range(ns):
            ba = sphere_body[k]
            for l in range(k + 1, ns):
                bb = sphere_body[l]
                if ba == bb:
                    continue
                if pair_skip[ba, bb] != 0:
                    continue
                if inv_mass[ba] == 0.0 and inv_mass[bb] == 0.0:
                    continue
                dx: cython.double = centers[k, 0] - centers[l, 0]
                dy: cython.double = centers[k, 1] - centers[l, 1]
                dz: cython.double = centers[k, 2] - centers[l, 2]
                dist: cython.double = sqrt(dx * dx + dy * dy + dz * dz)
                if dist - (sphere_radius[k] + sphere_radius[l]) >= contact_margin:
                    continue
                if dist < 1e-12:
                    continue
                nxd: cython.double = dx / dist
                nyd: cython.double = dy / dist
                nzd: cython.double = dz / dist
                con_a[ncon] = ba
                con_b[ncon] = bb
                con_sa[ncon] = k
                con_sb[ncon] = l
                con_lam_n[ncon] = 0.0
                con_lam_t[ncon] = 0.0
                con_slip[ncon] = 0
                pax: cython.double = centers[k, 0] - sphere_radius[k] * nxd
                pay: cython.double = centers[k, 1] - sphere_radius[k] * nyd
                paz: cython.double = centers[k, 2] - sphere_radius[k] * nzd
                pbx: cython.double = centers[l, 0] + sphere_radius[l] * nxd
                pby: cython.double = centers[l, 1] + sphere_radius[l] * nyd
                pbz: cython.double = centers[l, 2] + sphere_radius[l] * nzd
                _rot_inv_into(quat[ba, 0], quat[ba, 1], quat[ba, 2], quat[ba, 3],
                              pax - pos[ba, 0], pay - pos[ba, 1], paz - pos[ba, 2], tmp, 0)
                con_anch_a[ncon, 0] = tmp[0]
                con_anch_a[ncon, 1] = tmp[1]
                con_anch_a[ncon, 2] = tmp[2]
                _rot_into(quat_prev[ba, 0], quat_prev[ba, 1], quat_prev[ba, 2], quat_prev[ba, 3],
                          tmp[0], tmp[1], tmp[2], tmp, 3)
                con_prev_a[ncon, 0] = pos_prev[ba, 0] + tmp[3]
                con_prev_a[ncon, 1] = pos_prev[ba, 1] + tmp[4]
                con_prev_a[ncon, 2] = pos_prev[ba, 2] + tmp[5]
                _rot_inv_into(quat[bb, 0], quat[bb, 1], quat[bb, 2], quat[bb, 3],
                              pbx - pos[bb, 0], pby - pos[bb, 1], pbz - pos[bb, 2], tmp, 0)
                con_anch_b[ncon, 0] = tmp[0]
                con_anch_b[ncon, 1] = tmp[1]
                con_anch_b[ncon, 2] = tmp[2]
                _rot_into(quat_prev[bb, 0], quat_prev[bb, 1], quat_prev[bb, 2], quat_prev[bb, 3],
                          tmp[0], tmp[1], tmp[2], tmp, 3)
                con_prev_b[ncon, 0] = pos_prev[bb, 0] + tmp[3]
                con_prev_b[ncon, 1] = pos_prev[bb, 1] + tmp[4]
                con_prev_b[ncon, 2] = pos_prev[bb, 2] + tmp[5]
                rax: cython.double = pax - pos[ba, 0]
                ray: cython.double = pay - pos[ba, 1]
                raz: cython.double = paz - pos[ba, 2]
                rbx: cython.double = pbx - pos[bb, 0]
                rby: cython.double = pby - pos[bb, 1]
                rbz: cython.double = pbz - pos[bb, 2]
                rvx: cython.double = (vel[ba, 0] + (omega[ba, 1] * raz - omega[ba, 2] * ray)) \
                    - (vel[bb, 0] + (omega[bb, 1] * rbz - omega[bb, 2] * rby))
                rvy: cython.double = (vel[ba, 1] + (omega[ba, 2] * rax - omega[ba, 0] * raz)) \
                    - (vel[bb, 1] + (omega[bb, 2] * rbx - omega[bb, 0] * rbz))
                rvz: cython.double = (vel[ba, 2] + (omega[ba, 0] * ray - omega[ba, 1] * rax)) \
                    - (vel[bb, 2] + (omega[bb, 0] * rby - omega[bb, 1] * rbx))
                con_vn0[ncon] = nxd * rvx + nyd * rvy + nzd * rvz
                con_mu[ncon] = 0.5 * (friction[ba] + friction[bb])
                con_e[ncon] = restitution[ba] if restitution[ba] > restitution[bb] else restitution[bb]
                ncon = ncon + 1

        # ---- 4. positional projection sweeps -------------------------------
        alpha_t: cython.double = contact_compliance / (dt_s * dt_s)
        for sweep in range(1):
            for ci in range(ncon):
                ba = con_a[ci]
                bb = con_b[ci]
                k = con_sa[ci]
                nxd = 0.0
                nyd = 0.0
                nzd = 1.0
                _rot_into(quat[ba, 0], quat[ba, 1], quat[ba, 2], quat[ba, 3],
                          sphere_local[k, 0], sphere_local[k, 1], sphere_local[k, 2], tmp, 0)
                cax: cython.double = pos[ba, 0] + tmp[0]
                cay: cython.double = pos[ba, 1] + tmp[1]
                caz: cython.double = pos[ba, 2] + tmp[2]
                gapC: cython.double
                pbx = 0.0
                pby = 0.0
                pbz = 0.0
                if bb < 0:
                    gapC = caz - sphere_radius[k] - plane_z
                    pax = cax
                    pay = cay
                    paz = caz - sphere_radius[k]
                else:
                    l = con_sb[ci]
                    _rot_into(quat[bb, 0], quat[bb, 1], quat[bb, 2], quat[bb, 3],
                              sphere_local[l, 0], sphere_local[l, 1], sphere_local[l, 2], tmp, 0)
                    cbx: cython.double = pos[bb, 0] + tmp[0]
                    cby: cython.double = pos[bb, 1] + tmp[1]
                    cbz: cython.double = pos[bb, 2] + tmp[2]
                    dx = cax - cbx
                    dy = cay - cby
                    dz = caz - cbz
                    dist = sqrt(dx * dx + dy * dy + dz * dz)
                    if dist < 1e-12:
                        continue
                    nxd = dx / dist
                    nyd = dy / dist
                    nzd = dz / dist
                    gapC = dist - (sphere_radius[k] + sphere_radius[l])
                    pax = cax - sphere_radius[k] * nxd
                    pay = cay - sphere_radius[k] * nyd
                    paz = caz - sphere_radius[k] * nzd
                    pbx = cbx + sphere_radius[l] * nxd
                    pby = cby + sphere_radius[l] * nyd
                    pbz = cbz + sphere_radius[l] * nzd
                # complementarity: corrections may pull back while the accumulated
                # normal impulse stays non-negative, so overshoot cannot levitate
                # a resting body
                if gapC >= 0.0 and con_lam_n[ci] <= 0.0:
                    continue
                rax = pax - pos[ba, 0]
                ray = pay - pos[ba, 1]
                raz = paz - pos[ba, 2]
                wa: cython.double = _generalized_mass(inv_mass, inv_inertia, quat, ba,
                                                      nxd, nyd, nzd, rax, ray, raz, tmp)
                wb: cython.double = 0.0
                rbx = 0.0
                rby = 0.0
                rbz = 0.0
                if bb >= 0:
                    rbx = pbx - pos[bb, 0]
                    rby = pby - pos[bb, 1]
                    rbz = pbz - pos[bb, 2]
                    wb = _generalized_mass(inv_mass, inv_inertia, quat, bb,
                                           nxd, nyd, nzd, rbx, rby, rbz, tmp)
                wsum: cython.double = wa + wb
                if wsum <= 0.0:
                    continue
                dlam: cython.double = (-gapC - alpha_t * con_lam_n[ci]) / (wsum + alpha_t)
                if dlam < -con_lam_n[ci]:
                    dlam = -con_lam_n[ci]
                con_lam_n[ci] = con_lam_n[ci] + dlam
                _apply_impulse(pos, quat, inv_mass, inv_inertia, ba,
                               dlam * nxd, dlam * nyd, dlam * nzd, rax, ray, raz, tmp)
                if bb >= 0:
                    _apply_impulse(pos, quat, inv_mass, inv_inertia, bb,
                                   -dlam * nxd, -dlam * nyd, -dlam * nzd, rbx, rby, rbz, tmp)
                if con_lam_n[ci] <= 0.0:
                    continue
                # static friction: cancel tangential drift of the contact anchors
                _rot_into(quat[ba, 0], quat[ba, 1], quat[ba, 2], quat[ba, 3],
                          con_anch_a[ci, 0], con_anch_a[ci, 1], con_anch_a[ci, 2], tmp, 0)
                dax: cython.double = (pos[ba, 0] + tmp[0]) - con_prev_a[ci, 0]
                day: cython.double = (pos[ba, 1] + tmp[1]) - con_prev_a[ci, 1]
                daz: cython.double = (pos[ba, 2] + tmp[2]) - con_prev_a[ci, 2]
                if bb >= 0:
                    _rot_into(quat[bb, 0], quat[bb, 1], quat[bb, 2], quat[bb, 3],
                              con_anch_b[ci, 0], con_anch_b[ci, 1], con_anch_b[ci, 2], tmp, 0)
                    dax = dax - ((pos[bb, 0] + tmp[0]) - con_prev_b[ci, 0])
                    day = day - ((pos[bb, 1] + tmp[1]) - con_prev_b[ci, 1])
                    daz = daz - ((pos[bb, 2] + tmp[2]) - con_prev_b[ci, 2])
                dn: cython.double = dax * nxd + day * nyd + daz * nzd
                dax = dax - dn * nxd
                day = day - dn * nyd
                daz = daz - dn * nzd
                dlen: cython.double = sqrt(dax * dax + day * day + daz * daz)
                if dlen > 1e-12:
                    remaining: cython.double = con_mu[ci] * con_lam_n[ci] - con_lam_t[ci]
                    if remaining > 0.0:
                        tx: cython.double = dax / dlen
                        ty: cython.double = day / dlen
                        tz: cython.double = daz / dlen
                        wat: cython.double = _generalized_mass(inv_mass, inv_inertia, quat, ba,
                                                               tx, ty, tz, rax, ray, raz, tmp)
                        wbt: cython.double = 0.0
                        if bb >= 0:
                            wbt = _generalized_mass(inv_mass, inv_inertia, quat, bb,
                                                    tx, ty, tz, rbx, rby, rbz, tmp)
                        wtsum: cython.double = wat + wbt
                        if wtsum > 0.0:
                            dlam_t: cython.double = dlen / wtsum
                            if dlam_t > remaining:
                                dlam_t = remaining
                                con_slip[ci] = 1
                            con_lam_t[ci] = con_lam_t[ci] + dlam_t
                            _apply_impulse(pos, quat, inv_mass, inv_inertia, ba,
                                           -dlam_t * tx, -dlam_t * ty, -dlam_t * tz,
                                           rax, ray, raz, tmp)
                            if bb >= 0:
                                _apply_impulse(pos, quat, inv_mass, inv_inertia, bb,
                                               dlam_t * tx, dlam_t * ty, dlam_t * tz,
                                               rbx, rby, rbz, tmp)
            # the two gantry joints couple through the carriage and sequential
            # projection only transfers part of a violation per pass, so run
            # enough passes to keep the chain rigid even under impact load
            for jp in range(16):
                for j in range(nj):
                    p = joint_parent[j]
                    c = joint_child[j]
                    # angular lock: child frame tracks parent frame (prismatic locks all
                    # three axes, revolute locks the two perpendicular to the hinge)
                    erx: cython.double
                    ery: cython.double
                    erz: cython.double
                    if joint_type[j] == PRISMATIC:
                        qtw: cython.double = 1.0
                        qtx: cython.double = 0.0
                        qty: cython.double = 0.0
                        qtz: cython.double = 0.0
                        if p >= 0:
                            qtw = quat[p, 0]
                            qtx = quat[p, 1]
                            qty = quat[p, 2]
                            qtz = quat[p, 3]
                        # q_err = q_c * conj(q_t), a world-frame rotation
                        qcw: cython.double = quat[c, 0]
                        qcx: cython.double = quat[c, 1]
                        qcy: cython.double = quat[c, 2]
                        qcz: cython.double = quat[c, 3]
                        qew: cython.double = qcw * qtw + qcx * qtx + qcy * qty + qcz * qtz
                        qex: cython.double = -qcw * qtx + qcx * qtw - qcy * qtz + qcz * qty
                        qey: cython.double = -qcw * qty + qcx * qtz + qcy * qtw - qcz * qtx
                        qez: cython.double = -qcw * qtz - qcx * qty + qcy * qtx + qcz * qtw
                        if qew < 0.0:
                            qew = -qew
                            qex = -qex
                            qey = -qey
                            qez = -qez
                        vlen: cython.double = sqrt(qex * qex + qey * qey + qez * qez)
                        if vlen > 1e-12:
                            ang: cython.double = 2.0 * atan2(vlen, qew)
                            erx = qex / vlen * ang
                            ery = qey / vlen * ang
                            erz = qez / vlen * ang
                        else:
                            erx = 0.0
                            ery = 0.0
                            erz = 0.0
                    else:
                        if p >= 0:
                            _rot_into(quat[p, 0], quat[p, 1], quat[p, 2], quat[p, 3],
                                      joint_axis[j, 0], joint_axis[j, 1], joint_axis[j, 2], tmp, 0)
                        else:
                            tmp[0] = joint_axis[j, 0]
                            tmp[1] = joint_axis[j, 1]
                            tmp[2] = joint_axis[j, 2]
                        _rot_into(quat[c, 0], quat[c, 1], quat[c, 2], quat[c, 3],
                                  joint_axis[j, 0], joint_axis[j, 1], joint_axis[j, 2], tmp, 3)
                        # rotating the child by acw x apw aligns the axes
                        erx = -(tmp[4] * tmp[2] - tmp[5] * tmp[1])
                        ery = -(tmp[5] * tmp[0] - tmp[3] * tmp[2])
                        erz = -(tmp[3] * tmp[1] - tmp[4] * tmp[0])
                        _measure_joint_into(j, joint_type, joint_parent, joint_child, joint_axis,
                                            joint_anchor_p, joint_anchor_c, pos, quat, vel, omega,
                                            tmp, tmp, 6)
                        if tmp[6] < joint_lo[j]:
                            erx = erx + tmp[0] * (tmp[6] - joint_lo[j])
                            ery = ery + tmp[1] * (tmp[6] - joint_lo[j])
                            erz = erz + tmp[2] * (tmp[6] - joint_lo[j])
                        elif tmp[6] > joint_hi[j]:
                            erx = erx + tmp[0] * (tmp[6] - joint_hi[j])
                            ery = ery + tmp[1] * (tmp[6] - joint_hi[j])
                            erz = erz + tmp[2] * (tmp[6] - joint_hi[j])
                    elen: cython.double = sqrt(erx * erx + ery * ery + erz * erz)
                    if elen > 1e-12:
                        nax: cython.double = erx / elen
                        nay: cython.double = ery / elen
                        naz: cython.double = erz / elen
                        wac: cython.double = _angular_mass(inv_inertia, quat, c, nax, nay, naz, tmp)
                        wap: cython.double = 0.0
                        if p >= 0:
                            wap = _angular_mass(inv_inertia, quat, p, nax, nay, naz, tmp)
                        wsum = wac + wap
                        if wsum > 0.0:
                            dlam = elen / wsum
                            _inv_inertia_world_into(quat[c, 0], quat[c, 1], quat[c, 2], quat[c, 3],
                                                    inv_inertia, c, nax * dlam, nay * dlam, naz * dlam,
                                                    tmp, 0)
                            _add_rotation(quat, c, -1.0, tmp[0], tmp[1], tmp[2])
                            if p >= 0:
                                _inv_inertia_world_into(quat[p, 0], quat[p, 1], quat[p, 2], quat[p, 3],
                                                        inv_inertia, p, nax * dlam, nay * dlam, naz * dlam,
                                                        tmp, 0)
                                _add_rotation(quat, p, 1.0, tmp[0], tmp[1], tmp[2])
                    # positional lock: anchors coincide, except along a prismatic axis
                    # where only limit violations are corrected
                    if p >= 0:
                        _rot_into(quat[p, 0], quat[p, 1], quat[p, 2], quat[p, 3],
                                  joint_axis[j, 0], joint_axis[j, 1], joint_axis[j, 2], tmp, 0)
                        awx = tmp[0]
                        awy = tmp[1]
                        awz = tmp[2]
                        _rot_into(quat[p, 0], quat[p, 1], quat[p, 2], quat[p, 3],
                                  joint_anchor_p[j, 0], joint_anchor_p[j, 1], joint_anchor_p[j, 2], tmp, 0)
                        pax = pos[p, 0] + tmp[0]
                        pay = pos[p, 1] + tmp[1]
                        paz = pos[p, 2] + tmp[2]
                    else:
                        awx = joint_axis[j, 0]
                        awy = joint_axis[j, 1]
                        awz = joint_axis[j, 2]
                        pax = joint_anchor_p[j, 0]
                        pay = joint_anchor_p[j, 1]
                        paz = joint_anchor_p[j, 2]
                    _rot_into(quat[c, 0], quat[c, 1], quat[c, 2], quat[c, 3],
                              joint_anchor_c[j, 0], joint_anchor_c[j, 1], joint_anchor_c[j, 2], tmp, 0)
                    pcx: cython.double = pos[c, 0] + tmp[0]
                    pcy: cython.double = pos[c, 1] + tmp[1]
                    pcz: cython.double = pos[c, 2] + tmp[2]
                    dx = pcx - pax
                    dy = pcy - pay
                    dz = pcz - paz
                    if joint_type[j] == PRISMATIC:
                        along: cython.double = awx * dx + awy * dy + awz * dz
                        erx = dx - along * awx
                        ery = dy - along * awy
                        erz = dz - along * awz
                        if along < joint_lo[j]:
                            erx = erx + awx * (along - joint_lo[j])
                            ery = ery + awy * (along - joint_lo[j])
                            erz = erz + awz * (along - joint_lo[j])
                        elif along > joint_hi[j]:
                            erx = erx + awx * (along - joint_hi[j])
                            ery = ery + awy * (along - joint_hi[j])
                            erz = erz + awz * (along - joint_hi[j])
                    else:
                        erx = dx
                        ery = dy
                        erz = dz
                    elen = sqrt(erx * erx + ery * ery + erz * erz)
                    if elen > 1e-15:
                        nax = erx / elen
                        nay = ery / elen
                        naz = erz / elen
                        rcx: cython.double = pcx - pos[c, 0]
                        rcy: cython.double = pcy - pos[c, 1]
                        rcz: cython.double = pcz - pos[c, 2]
                        if joint_type[j] == PRISMATIC:
                            # orientation is fully locked, so the positional
                            # correction acts at the COM instead of the anchor;
                            # anchor-arm torques would fight the angular lock
                            rcx = 0.0
                            rcy = 0.0
                            rcz = 0.0
                        wac = _generalized_mass(inv_mass, inv_inertia, quat, c,
                                                nax, nay, naz, rcx, rcy, rcz, tmp)
                        wap = 0.0
                        rpx: cython.double = 0.0
                        rpy: cython.double = 0.0
                        rpz: cython.double = 0.0
                        if p >= 0:
                            if joint_type[j] != PRISMATIC:
                                rpx = pax - pos[p, 0]
                                rpy = pay - pos[p, 1]
                                rpz = paz - pos[p, 2]
                            wap = _generalized_mass(inv_mass, inv_inertia, quat, p,
                                                    nax, nay, naz, rpx, rpy, rpz, tmp)
                        wsum = wac + wap
                        if wsum > 0.0:
                            dlam = elen / wsum
                            _apply_impulse(pos, quat, inv_mass, inv_inertia, c,
                                           -dlam * nax, -dlam * nay, -dlam * naz, rcx, rcy, rcz, tmp)
                            if p >= 0:
                                _apply_impulse(pos, quat, inv_mass, inv_inertia, p,
                                               dlam * nax, dlam * nay, dlam * naz, rpx, rpy, rpz, tmp)

        # contacts whose friction cap bound this step are sliding; re-seat their
        # world anchors at the settled pose so kinetic drag never references a
        # stale pin
        for ci in range(ncon):
            if con_b[ci] >= 0 or con_slip[ci] == 0:
                continue
            ba = con_a[ci]
            k = con_sa[ci]
            _rot_into(quat[ba, 0], quat[ba, 1], quat[ba, 2], quat[ba, 3],
                      con_anch_a[ci, 0], con_anch_a[ci, 1], con_anch_a[ci, 2], tmp, 0)
            fric_anchor[k, 0] = pos[ba, 0] + tmp[0]
            fric_anchor[k, 1] = pos[ba, 1] + tmp[1]
            fric_anchor[k, 2] = pos[ba, 2] + tmp[2]

        # ---- 5. velocity reconciliation ------------------------------------
        inv_dt: cython.double = 1.0 / dt_s
        for i in range(n):
            if inv_mass[i] == 0.0:
                continue
            vel[i, 0] = (pos[i, 0] - pos_prev[i, 0]) * inv_dt
            vel[i, 1] = (pos[i, 1] - pos_prev[i, 1]) * inv_dt
            vel[i, 2] = (pos[i, 2] - pos_prev[i, 2]) * inv_dt
            # dq = q_new * conj(q_old); omega = 2/dt_s * vec(dq), shortest arc
            ow: cython.double = quat[i, 0] * quat_prev[i, 0] + quat[i, 1] * quat_prev[i, 1] \
                + quat[i, 2] * quat_prev[i, 2] + quat[i, 3] * quat_prev[i, 3]
            ox: cython.double = -quat[i, 0] * quat_prev[i, 1] + quat[i, 1] * quat_prev[i, 0] \
                - quat[i, 2] * quat_prev[i, 3] + quat[i, 3] * quat_prev[i, 2]
            oy: cython.double = -quat[i, 0] * quat_prev[i, 2] + quat[i, 1] * quat_prev[i, 3] \
                + quat[i, 2] * quat_prev[i, 0] - quat[i, 3] * quat_prev[i, 1]
            oz: cython.double = -quat[i, 0] * quat_prev[i, 3] - quat[i, 1] * quat_prev[i, 2] \
                + quat[i, 2] * quat_prev[i, 1] + quat[i, 3] * quat_prev[i, 0]
            s2: cython.double = 2.0 * inv_dt
            if ow < 0.0:
                s2 = -s2
            omega[i, 0] = s2 * ox
            omega[i, 1] = s2 * oy
            omega[i, 2] = s2 * oz

        # ---- 6. restitution and dynamic friction ---------------------------
        gmag: cython.double = sqrt(gx * gx + gy * gy + gz * gz)
        for ci in range(ncon):
            if con_lam_n[ci] <= 0.0:
                continue
            ba = con_a[ci]
            bb = con_b[ci]
            k = con_sa[ci]
            _rot_into(quat[ba, 0], quat[ba, 1], quat[ba, 2], quat[ba, 3],
                      sphere_local[k, 0], sphere_local[k, 1], sphere_local[k, 2], tmp, 0)
            cax = pos[ba, 0] + tmp[0]
            cay = pos[ba, 1] + tmp[1]
            caz = pos[ba, 2] + tmp[2]
            nxd = 0.0
            nyd = 0.0
            nzd = 1.0
            pbx = 0.0
            pby = 0.0
            pbz = 0.0
            if bb < 0:
                pax = cax
                pay = cay
                paz = caz - sphere_radius[k]
            else:
                l = con_sb[ci]
                _rot_into(quat[bb, 0], quat[bb, 1], quat[bb, 2], quat[bb, 3],
                          sphere_local[l, 0], sphere_local[l, 1], sphere_local[l, 2], tmp, 0)
                cbx = pos[bb, 0] + tmp[0]
                cby = pos[bb, 1] + tmp[1]
                cbz = pos[bb, 2] + tmp[2]
                dx = cax - cbx
                dy = cay - cby
                dz = caz - cbz
                dist = sqrt(dx * dx + dy * dy + dz * dz)
                if dist < 1e-12:
                    continue
                nxd = dx / dist
                nyd = dy / dist
                nzd = dz / dist
                pax = cax - sphere_radius[k] * nxd
                pay = cay - sphere_radius[k] * nyd
                paz = caz - sphere_radius[k] * nzd
                pbx = cbx + sphere_radius[l] * nxd
                pby = cby + sphere_radius[l] * nyd
                pbz = cbz + sphere_radius[l] * nzd
            rax = pax - pos[ba, 0]
            ray = pay - pos[ba, 1]
            raz = paz - pos[ba, 2]
            rbx = 0.0
            rby = 0.0
            rbz = 0.0
            rvx = vel[ba, 0] + (omega[ba, 1] * raz - omega[ba, 2] * ray)
            rvy = vel[ba, 1] + (omega[ba, 2] * rax - omega[ba, 0] * raz)
            rvz = vel[ba, 2] + (omega[ba, 0] * ray - omega[ba, 1] * rax)
            if bb >= 0:
                rbx = pbx - pos[bb, 0]
                rby = pby - pos[bb, 1]
                rbz = pbz - pos[bb, 2]
                rvx = rvx - (vel[bb, 0] + (omega[bb, 1] * rbz - omega[bb, 2] * rby))
                rvy = rvy - (vel[bb, 1] + (omega[bb, 2] * rbx - omega[bb, 0] * rbz))
                rvz = rvz - (vel[bb, 2] + (omega[bb, 0] * rby - omega[bb, 1] * rbx))
            vn: cython.double = nxd * rvx + nyd * rvy + nzd * rvz
            ecoef: cython.double = con_e[ci]
            if con_vn0[ci] > -(2.0 * gmag * dt_s):
                ecoef = 0.0
            target: cython.double = -ecoef * con_vn0[ci]
            if target < 0.0:
                target = 0.0
            dvn: cython.double = target - vn
            wa = _generalized_mass(inv_mass, inv_inertia, quat, ba, nxd, nyd, nzd,
                                   rax, ray, raz, tmp)
            wb = 0.0
            if bb >= 0:
                wb = _generalized_mass(inv_mass, inv_inertia, quat, bb, nxd, nyd, nzd,
                                       rbx, rby, rbz, tmp)
            wsum = wa + wb
            if wsum <= 0.0:
                continue
            jn: cython.double = dvn / wsum
            _velocity_impulse(vel, omega, quat, inv_mass, inv_inertia, ba,
                              jn * nxd, jn * nyd, jn * nzd, rax, ray, raz, tmp)
            if bb >= 0:
                _velocity_impulse(vel, omega, quat, inv_mass, inv_inertia, bb,
                                  -jn * nxd, -jn * nyd, -jn * nzd, rbx, rby, rbz, tmp)
            # dynamic friction against the updated relative velocity
            rvx = vel[ba, 0] + (omega[ba, 1] * raz - omega[ba, 2] * ray)
            rvy = vel[ba, 1] + (omega[ba, 2] * rax - omega[ba, 0] * raz)
            rvz = vel[ba, 2] + (omega[ba, 0] * ray - omega[ba, 1] * rax)
            if bb >= 0:
                rvx = rvx - (vel[bb, 0] + (omega[bb, 1] * rbz - omega[bb, 2] * rby))
                rvy = rvy - (vel[bb, 1] + (omega[bb, 2] * rbx - omega[bb, 0] * rbz))
                rvz = rvz - (vel[bb, 2] + (omega[bb, 0] * rby - omega[bb, 1] * rbx))
            vn = nxd * rvx + nyd * rvy + nzd * rvz
            vtx: cython.double = rvx - vn * nxd
            vty: cython.double = rvy - vn * nyd
            vtz: cython.double = rvz - vn * nzd
            vtlen: cython.double = sqrt(vtx * vtx + vty * vty + vtz * vtz)
            if vtlen > 1e-9:
                tx = vtx / vtlen
                ty = vty / vtlen
                tz = vtz / vtlen
                wat = _generalized_mass(inv_mass, inv_inertia, quat, ba, tx, ty, tz,
                                        rax, ray, raz, tmp)
                wbt = 0.0
                if bb >= 0:
                    wbt = _generalized_mass(inv_mass, inv_inertia, quat, bb, tx, ty, tz,
                                            rbx, rby, rbz, tmp)
                wtsum = wat + wbt
                if wtsum > 0.0:
                    jt: cython.double = vtlen / wtsum
                    jcap: cython.double = con_mu[ci] * con_lam_n[ci] * inv_dt
                    if jt > jcap:
                        jt = jcap
                    _velocity_impulse(vel, omega, quat, inv_mass, inv_inertia, ba,
                                      -jt * tx, -jt * ty, -jt * tz, rax, ray, raz, tmp)
                    if bb >= 0:
                        _velocity_impulse(vel, omega, quat, inv_mass, inv_inertia, bb,
                                          jt * tx, jt * ty, jt * tz, rbx, rby, rbz, tmp)

    # ---- 7. joint measurement and diagnostics --------------------------
    for j in range(nj):
        _measure_joint_into(j, joint_type, joint_parent, joint_child, joint_axis,
                            joint_anchor_p, joint_anchor_c, pos, quat, vel, omega,
                            tmp, tmp, 6)
        joint_q[j] = tmp[6]
        joint_qdot[j] = tmp[7]

    max_pen: cython.double = 0.0
    for k in range(ns):
        b = sphere_body[k]
        _rot_into(quat[b, 0], quat[b, 1], quat[b, 2], quat[b, 3],
                  sphere_local[k, 0], sphere_local[k, 1], sphere_local[k, 2], tmp, 0)
        centers[k, 0] = pos[b, 0] + tmp[0]
        centers[k, 1] = pos[b, 1] + tmp[1]
        centers[k, 2] = pos[b, 2] + tmp[2]
    for k in range(ns):
        b = sphere_body[k]
        if plane_collide[b] != 0 and inv_mass[b] != 0.0:
            depth: cython.double = plane_z + sphere_radius[k] - centers[k, 2]
            if depth > max_pen:
                max_pen = depth
    for k in range(ns):
        ba = sphere_body[k]
        for l in range(k + 1, ns):
            bb = sphere_body[l]
            if ba == bb:
                continue
            if pair_skip[ba, bb] != 0:
                continue
            if inv_mass[ba] == 0.0 and inv_mass[bb] == 0.0:
                continue
            dx = centers[k, 0] - centers[l, 0]
            dy = centers[k, 1] - centers[l, 1]
            dz = centers[k, 2] - centers[l, 2]
            dist = sqrt(dx * dx + dy * dy + dz * dz)
            depth = (sphere_radius[k] + sphere_radius[l]) - dist
            if depth > max_pen:
                max_pen = depth
    diag[0] = max_pen

    max_res: cython.double = 0.0
    for j in range(nj):
        p = joint_parent[j]
        c = joint_child[j]
        if p >= 0:
            _rot_into(quat[p, 0], quat[p, 1], quat[p, 2], quat[p, 3],
                      joint_axis[j, 0], joint_axis[j, 1], joint_axis[j, 2], tmp, 0)
            awx = tmp[0]
            awy = tmp[1]
            awz = tmp[2]
            _rot_into(quat[p, 0], quat[p, 1], quat[p, 2], quat[p, 3],
                      joint_anchor_p[j, 0], joint_anchor_p[j, 1], joint_anchor_p[j, 2], tmp, 0)
            pax = pos[p, 0] + tmp[0]
            pay = pos[p, 1] + tmp[1]
            paz = pos[p, 2] + tmp[2]
        else:
            awx = joint_axis[j, 0]
            awy = joint_axis[j, 1]
            awz = joint_axis[j, 2]
            pax = joint_anchor_p[j, 0]
            pay = joint_anchor_p[j, 1]
            paz = joint_anchor_p[j, 2]
        _rot_into(quat[c, 0], quat[c, 1], quat[c, 2], quat[c, 3],
                  joint_anchor_c[j, 0], joint_anchor_c[j, 1], joint_anchor_c[j, 2], tmp, 0)
        pcx = pos[c, 0] + tmp[0]
        pcy = pos[c, 1] + tmp[1]
        pcz = pos[c, 2] + tmp[2]
        dx = pcx - pax
        dy = pcy - pay
        dz = pcz - paz
        if joint_type[j] == PRISMATIC:
            along = awx * dx + awy * dy + awz * dz
            erx = dx - along * awx
            ery = dy - along * awy
            erz = dz - along * awz
            res: cython.double = sqrt(erx * erx + ery * ery + erz * erz)
            if along < joint_lo[j]:
                if joint_lo[j] - along > res:
                    res = joint_lo[j] - along
            elif along > joint_hi[j]:
                if along - joint_hi[j] > res:
                    res = along - joint_hi[j]
            qtw = 1.0
            qtx = 0.0
            qty = 0.0
            qtz = 0.0
            if p >= 0:
                qtw = quat[p, 0]
                qtx = quat[p, 1]
                qty = quat[p, 2]
                qtz = quat[p, 3]
            qcw = quat[c, 0]
            qcx = quat[c, 1]
            qcy = quat[c, 2]
            qcz = quat[c, 3]
            qew = qcw * qtw + qcx * qtx + qcy * qty + qcz * qtz
            qex = -qcw * qtx + qcx * qtw - qcy * qtz + qcz * qty
            qey = -qcw * qty + qcx * qtz + qcy * qtw - qcz * qtx
            qez = -qcw * qtz - qcx * qty + qcy * qtx + qcz * qtw
            if qew < 0.0:
                qew = -qew
                qex = -qex
                qey = -qey
                qez = -qez
            vlen = sqrt(qex * qex + qey * qey + qez * qez)
            ang = 2.0 * atan2(vlen, qew)
            if ang > res:
                res = ang
        else:
            res = sqrt(dx * dx + dy * dy + dz * dz)
            _rot_into(quat[c, 0], quat[c, 1], quat[c, 2], quat[c, 3],
                      joint_axis[j, 0], joint_axis[j, 1], joint_axis[j, 2], tmp, 3)
            mx: cython.double = tmp[4] * awz - tmp[5] * awy
            my: cython.double = tmp[5] * awx - tmp[3] * awz
            mz: cython.double = tmp[3] * awy - tmp[4] * awx
            mis: cython.double = sqrt(mx * mx + my * my + mz * mz)
            if mis > res:
                res = mis
        if res > max_res:
            max_res = res
    diag[1] = max_res
    return 0
