"""Reduced-order rigid multibody dynamics for the biped environment.

Bodies form a kinematic tree with one joint (revolute or prismatic) per body,
so the generalized coordinate index equals the body index. A floating base is
modelled as a chain of massless virtual joints ending in the torso.

Dynamics are evaluated in world coordinates with body Jacobians::

    M(q)   = sum_b  m_b Jv_b^T Jv_b + Jw_b^T I_b Jw_b
    h(q,v) = sum_b  Jv_b^T m_b (a_b - g) + Jw_b^T (I_b alpha_b + w_b x I_b w_b)

where ``a_b``/``alpha_b`` are the velocity-product accelerations (qdd = 0).
Ground contact is a penalty spring-damper with viscous-capped Coulomb
friction. Integration is semi-implicit Euler.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numba as nb
import numpy as np

REVOLUTE = 0
PRISMATIC = 1

GRAVITY = 9.81


class ModelArrays(NamedTuple):
    parent: np.ndarray
    jtype: np.ndarray
    axis: np.ndarray
    offset: np.ndarray
    mass: np.ndarray
    com: np.ndarray
    inertia: np.ndarray
    contact_body: np.ndarray
    contact_point: np.ndarray
    contact_foot: np.ndarray
    actuated: np.ndarray
    anc: np.ndarray
    n_anc: np.ndarray
    armature: np.ndarray


class ContactParams(NamedTuple):
    stiffness: float = 4.0e4
    damping: float = 600.0
    tangential_stiffness: float = 2.0e4
    friction_damping: float = 300.0
    mu: float = 0.8


@dataclass
class MultibodyModel:
    """Static description of a floating-base tree.

    ``actuated`` lists the generalized-coordinate indices driven by the PD
    loop, in the model's joint order (see ``joint_names``).
    """

    body_names: list[str]
    parent: np.ndarray
    jtype: np.ndarray
    axis: np.ndarray
    offset: np.ndarray
    mass: np.ndarray
    com: np.ndarray
    inertia: np.ndarray
    contact_body: np.ndarray
    contact_point: np.ndarray
    contact_foot: np.ndarray
    actuated: np.ndarray
    joint_names: list[str]
    root_body: int
    head_point: np.ndarray  # head location in the root body frame
    height: float  # standing height, used to scale the fall threshold
    armature: float = 0.1  # reflected rotor inertia on actuated joints, kg m^2
    extras: dict = field(default_factory=dict)

    @property
    def n_dof(self) -> int:
        return len(self.parent)

    @property
    def total_mass(self) -> float:
        return float(self.mass.sum())

    def arrays(self, mass_scale: np.ndarray | None = None) -> ModelArrays:
        mass, inertia = self.mass, self.inertia
        if mass_scale is not None:
            mass = mass * mass_scale
            inertia = inertia * mass_scale[:, None, None]
        return ModelArrays(
            self.parent, self.jtype, self.axis, self.offset,
            np.ascontiguousarray(mass), self.com, np.ascontiguousarray(inertia),
            self.contact_body, self.contact_point, self.contact_foot, self.actuated,
            *_ancestors(self.parent), self.armature_vector(),
        )

    def armature_vector(self) -> np.ndarray:
        arm = np.zeros(self.n_dof)
        arm[self.actuated] = self.armature
        return arm


def _ancestors(parent: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = len(parent)
    anc = np.full((n, n), -1, np.int64)
    count = np.zeros(n, np.int64)
    for b in range(n):
        j = b
        while j >= 0:
            anc[b, count[b]] = j
            count[b] += 1
            j = parent[j]
    return anc, count


# ---------------------------------------------------------------------------
# numba kernels
#
# Hot loops use scalar arithmetic on preallocated buffers; small temporary
# arrays inside the substep loop dominate runtime otherwise.

@nb.njit(cache=True, inline="always")
def _cross(ax, ay, az, bx, by, bz):
    return ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx


@nb.njit(cache=True, inline="always")
def _matvec(R, x, y, z):
    return (R[0, 0] * x + R[0, 1] * y + R[0, 2] * z,
            R[1, 0] * x + R[1, 1] * y + R[1, 2] * z,
            R[2, 0] * x + R[2, 1] * y + R[2, 2] * z)


@nb.njit(cache=True, inline="always")
def _matmul3(A, B, out):
    for r in range(3):
        a0, a1, a2 = A[r, 0], A[r, 1], A[r, 2]
        for c in range(3):
            out[r, c] = a0 * B[0, c] + a1 * B[1, c] + a2 * B[2, c]


@nb.njit(cache=True, inline="always")
def _rotate_inertia(R, I, out):
    # out = R I R^T
    for r in range(3):
        for c in range(3):
            s = 0.0
            for k in range(3):
                t = R[r, k]
                if t != 0.0:
                    s += t * (I[k, 0] * R[c, 0] + I[k, 1] * R[c, 1] + I[k, 2] * R[c, 2])
            out[r, c] = s


@nb.njit(cache=True)
def _axis_rotation(axis, angle, out):
    x, y, z = axis[0], axis[1], axis[2]
    c, s = np.cos(angle), np.sin(angle)
    C = 1.0 - c
    out[0, 0] = c + x * x * C
    out[0, 1] = x * y * C - z * s
    out[0, 2] = x * z * C + y * s
    out[1, 0] = y * x * C + z * s
    out[1, 1] = c + y * y * C
    out[1, 2] = y * z * C - x * s
    out[2, 0] = z * x * C - y * s
    out[2, 1] = z * y * C + x * s
    out[2, 2] = c + z * z * C


class _Work(NamedTuple):
    R: np.ndarray
    pos: np.ndarray
    omega: np.ndarray
    vel: np.ndarray
    axis_w: np.ndarray
    alpha: np.ndarray
    acc: np.ndarray
    rot: np.ndarray
    M: np.ndarray
    Q: np.ndarray
    Jv: np.ndarray
    Jw: np.ndarray
    foot: np.ndarray
    L: np.ndarray
    tmp: np.ndarray
    eye: np.ndarray
    Iw: np.ndarray


@nb.njit(cache=True)
def make_work(n):
    return _Work(np.empty((n, 3, 3)), np.empty((n, 3)), np.empty((n, 3)), np.empty((n, 3)),
                 np.empty((n, 3)), np.empty((n, 3)), np.empty((n, 3)), np.empty((3, 3)),
                 np.empty((n, n)), np.empty(n), np.empty((n, 3)), np.empty((n, 3)),
                 np.empty((2, 3)), np.empty((n, n)), np.empty(n), np.eye(3), np.empty((3, 3)))


@nb.njit(cache=True)
def _kinematics(m, q, qd, w):
    """World pose, velocity and velocity-product acceleration of each body.

    Fills ``w.R``, ``w.pos`` (joint origin), ``w.omega``, ``w.vel`` (origin
    velocity), ``w.axis_w`` and ``w.alpha``/``w.acc`` evaluated at qdd = 0.
    """
    n = q.shape[0]
    R, pos, omega, vel, axis_w, alpha, acc = w.R, w.pos, w.omega, w.vel, w.axis_w, w.alpha, w.acc
    for i in range(n):
        p = m.parent[i]
        if p < 0:
            Rp = w.eye
            ppx = ppy = ppz = 0.0
            wx = wy = wz = 0.0
            vx = vy = vz = 0.0
            lx = ly = lz = 0.0
            cx = cy = cz = 0.0
        else:
            Rp = R[p]
            ppx, ppy, ppz = pos[p, 0], pos[p, 1], pos[p, 2]
            wx, wy, wz = omega[p, 0], omega[p, 1], omega[p, 2]
            vx, vy, vz = vel[p, 0], vel[p, 1], vel[p, 2]
            lx, ly, lz = alpha[p, 0], alpha[p, 1], alpha[p, 2]
            cx, cy, cz = acc[p, 0], acc[p, 1], acc[p, 2]
        ax, ay, az = _matvec(Rp, m.axis[i, 0], m.axis[i, 1], m.axis[i, 2])
        axis_w[i, 0], axis_w[i, 1], axis_w[i, 2] = ax, ay, az
        dx, dy, dz = _matvec(Rp, m.offset[i, 0], m.offset[i, 1], m.offset[i, 2])
        s = qd[i]
        if m.jtype[i] == REVOLUTE:
            _axis_rotation(m.axis[i], q[i], w.rot)
            _matmul3(Rp, w.rot, R[i])
            omega[i, 0], omega[i, 1], omega[i, 2] = wx + ax * s, wy + ay * s, wz + az * s
            ex, ey, ez = _cross(wx, wy, wz, dx, dy, dz)
            vel[i, 0], vel[i, 1], vel[i, 2] = vx + ex, vy + ey, vz + ez
            fx, fy, fz = _cross(wx, wy, wz, ax * s, ay * s, az * s)
            alpha[i, 0], alpha[i, 1], alpha[i, 2] = lx + fx, ly + fy, lz + fz
            gx, gy, gz = _cross(lx, ly, lz, dx, dy, dz)
            hx, hy, hz = _cross(wx, wy, wz, ex, ey, ez)
            acc[i, 0], acc[i, 1], acc[i, 2] = cx + gx + hx, cy + gy + hy, cz + gz + hz
        else:
            dx, dy, dz = dx + ax * q[i], dy + ay * q[i], dz + az * q[i]
            R[i, :, :] = Rp
            omega[i, 0], omega[i, 1], omega[i, 2] = wx, wy, wz
            ex, ey, ez = _cross(wx, wy, wz, dx, dy, dz)
            vel[i, 0], vel[i, 1], vel[i, 2] = vx + ex + ax * s, vy + ey + ay * s, vz + ez + az * s
            alpha[i, 0], alpha[i, 1], alpha[i, 2] = lx, ly, lz
            gx, gy, gz = _cross(lx, ly, lz, dx, dy, dz)
            hx, hy, hz = _cross(wx, wy, wz, ex, ey, ez)
            kx, ky, kz = _cross(wx, wy, wz, ax * s, ay * s, az * s)
            acc[i, 0] = cx + gx + hx + 2.0 * kx
            acc[i, 1] = cy + gy + hy + 2.0 * ky
            acc[i, 2] = cz + gz + hz + 2.0 * kz
        pos[i, 0], pos[i, 1], pos[i, 2] = ppx + dx, ppy + dy, ppz + dz


@nb.njit(cache=True)
def _mass_matrix_and_bias(m, q, qd, gravity, w):
    """Fill ``w.M`` with M(q) and ``w.Q`` with -h(q, qd)."""
    n = q.shape[0]
    _kinematics(m, q, qd, w)
    R, pos, omega, axis_w, alpha, acc = w.R, w.pos, w.omega, w.axis_w, w.alpha, w.acc
    M, Q, Jv, Jw = w.M, w.Q, w.Jv, w.Jw
    M[:, :] = 0.0
    Q[:] = 0.0
    for b in range(n):
        mb = m.mass[b]
        if mb == 0.0:
            continue
        rx, ry, rz = _matvec(R[b], m.com[b, 0], m.com[b, 1], m.com[b, 2])
        cx, cy, cz = pos[b, 0] + rx, pos[b, 1] + ry, pos[b, 2] + rz
        Iw = w.Iw
        _rotate_inertia(R[b], m.inertia[b], Iw)
        na = m.n_anc[b]
        for k in range(na):
            j = m.anc[b, k]
            ax, ay, az = axis_w[j, 0], axis_w[j, 1], axis_w[j, 2]
            if m.jtype[j] == REVOLUTE:
                Jw[k, 0], Jw[k, 1], Jw[k, 2] = ax, ay, az
                Jv[k, 0], Jv[k, 1], Jv[k, 2] = _cross(ax, ay, az, cx - pos[j, 0],
                                                      cy - pos[j, 1], cz - pos[j, 2])
            else:
                Jw[k, 0] = Jw[k, 1] = Jw[k, 2] = 0.0
                Jv[k, 0], Jv[k, 1], Jv[k, 2] = ax, ay, az
        for k1 in range(na):
            j1 = m.anc[b, k1]
            iwx, iwy, iwz = _matvec(Iw, Jw[k1, 0], Jw[k1, 1], Jw[k1, 2])
            for k2 in range(k1 + 1):
                j2 = m.anc[b, k2]
                val = mb * (Jv[k1, 0] * Jv[k2, 0] + Jv[k1, 1] * Jv[k2, 1] + Jv[k1, 2] * Jv[k2, 2])
                val += iwx * Jw[k2, 0] + iwy * Jw[k2, 1] + iwz * Jw[k2, 2]
                M[j1, j2] += val
                if j1 != j2:
                    M[j2, j1] += val
        wx, wy, wz = omega[b, 0], omega[b, 1], omega[b, 2]
        lx, ly, lz = alpha[b, 0], alpha[b, 1], alpha[b, 2]
        e1 = _cross(lx, ly, lz, rx, ry, rz)
        t = _cross(wx, wy, wz, rx, ry, rz)
        e2 = _cross(wx, wy, wz, t[0], t[1], t[2])
        fx = mb * (acc[b, 0] + e1[0] + e2[0])
        fy = mb * (acc[b, 1] + e1[1] + e2[1])
        fz = mb * (acc[b, 2] + e1[2] + e2[2] + gravity)
        iw = _matvec(Iw, wx, wy, wz)
        il = _matvec(Iw, lx, ly, lz)
        g = _cross(wx, wy, wz, iw[0], iw[1], iw[2])
        nx, ny, nz = il[0] + g[0], il[1] + g[1], il[2] + g[2]
        for k in range(na):
            j = m.anc[b, k]
            Q[j] -= (Jv[k, 0] * fx + Jv[k, 1] * fy + Jv[k, 2] * fz
                     + Jw[k, 0] * nx + Jw[k, 1] * ny + Jw[k, 2] * nz)
    for j in range(n):
        M[j, j] += m.armature[j]


@nb.njit(cache=True)
def _contacts(m, cp, w, anchor, engaged):
    """Add penalty contact generalized forces to ``w.Q``; per-foot sums in ``w.foot``.

    Tangential force is a stick-slip spring to a per-contact ``anchor`` plus
    damping, capped by the Coulomb cone; the anchor slides when capped.
    """
    R, pos, omega, vel, axis_w = w.R, w.pos, w.omega, w.vel, w.axis_w
    w.foot[:, :] = 0.0
    for k in range(m.contact_body.shape[0]):
        b = m.contact_body[k]
        rx, ry, rz = _matvec(R[b], m.contact_point[k, 0], m.contact_point[k, 1],
                             m.contact_point[k, 2])
        pz = pos[b, 2] + rz
        px, py = pos[b, 0] + rx, pos[b, 1] + ry
        if pz >= 0.0:
            engaged[k] = False
            continue
        if not engaged[k]:
            engaged[k] = True
            anchor[k, 0], anchor[k, 1] = px, py
        ox, oy, oz = _cross(omega[b, 0], omega[b, 1], omega[b, 2], rx, ry, rz)
        vx, vy, vz = vel[b, 0] + ox, vel[b, 1] + oy, vel[b, 2] + oz
        fn = -cp.stiffness * pz - cp.damping * vz
        if fn <= 0.0:
            continue
        fx = -cp.tangential_stiffness * (px - anchor[k, 0]) - cp.friction_damping * vx
        fy = -cp.tangential_stiffness * (py - anchor[k, 1]) - cp.friction_damping * vy
        ft = np.sqrt(fx * fx + fy * fy)
        cap = cp.mu * fn
        if ft > cap:
            fx *= cap / ft
            fy *= cap / ft
            anchor[k, 0] = px + fx / cp.tangential_stiffness
            anchor[k, 1] = py + fy / cp.tangential_stiffness
        foot_id = m.contact_foot[k]
        w.foot[foot_id, 0] += fx
        w.foot[foot_id, 1] += fy
        w.foot[foot_id, 2] += fn
        j = b
        while j >= 0:
            if m.jtype[j] == REVOLUTE:
                tx, ty, tz = _cross(px - pos[j, 0], py - pos[j, 1], pz - pos[j, 2], fx, fy, fn)
                w.Q[j] += axis_w[j, 0] * tx + axis_w[j, 1] * ty + axis_w[j, 2] * tz
            else:
                w.Q[j] += axis_w[j, 0] * fx + axis_w[j, 1] * fy + axis_w[j, 2] * fn
            j = m.parent[j]


@nb.njit(cache=True)
def _solve_spd(M, b, L, out):
    # Cholesky solve of M x = b
    n = M.shape[0]
    for i in range(n):
        for j in range(i + 1):
            s = M[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                L[i, i] = np.sqrt(s) if s > 0.0 else np.nan
            else:
                L[i, j] = s / L[j, j]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * out[k]
        out[i] = s / L[i, i]
    for i in range(n - 1, -1, -1):
        s = out[i]
        for k in range(i + 1, n):
            s -= L[k, i] * out[k]
        out[i] = s / L[i, i]


@nb.njit(cache=True)
def pd_torque(target, q, qd, kp, kd, limit):
    tau = kp * (target - q) - kd * qd
    return np.minimum(np.maximum(tau, -limit), limit)


@nb.njit(cache=True)
def _substep(m, q, qd, target, kp, kd, limit, dt, gravity, cp, w, tau, anchor, engaged):
    act = m.actuated
    for i in range(act.shape[0]):
        j = act[i]
        t = kp[i] * (target[i] - q[j]) - kd[i] * qd[j]
        tau[i] = min(max(t, -limit[i]), limit[i])
    _mass_matrix_and_bias(m, q, qd, gravity, w)
    for i in range(act.shape[0]):
        w.Q[act[i]] += tau[i]
    _contacts(m, cp, w, anchor, engaged)
    _solve_spd(w.M, w.Q, w.L, w.tmp)
    for i in range(q.shape[0]):
        qd[i] += dt * w.tmp[i]
        q[i] += dt * qd[i]


@nb.njit(cache=True)
def substep(m, q, qd, target, kp, kd, limit, dt, gravity, cp, anchor, engaged):
    """One semi-implicit Euler step in place. Returns (tau, foot_forces)."""
    w = make_work(q.shape[0])
    tau = np.empty(m.actuated.shape[0])
    _substep(m, q, qd, target, kp, kd, limit, dt, gravity, cp, w, tau, anchor, engaged)
    return tau, w.foot.copy()


@nb.njit(cache=True)
def policy_step(m, q, qd, target, kp, kd, limit, n_sub, dt, gravity, cp, anchor, engaged):
    """Hold ``target`` for ``n_sub`` PD substeps.

    Returns the last applied torque, mean per-foot ground force, the mean
    over substeps of sum|tau*omega| (omega at substep start), the trapezoid
    energy over the step and an ok flag (False on non-finite state).
    """
    act = m.actuated
    na = act.shape[0]
    w = make_work(q.shape[0])
    foot_sum = np.zeros((2, 3))
    power_sum = 0.0
    energy = 0.0
    tau = np.zeros(na)
    ok = True
    w0 = np.empty(na)
    for _ in range(n_sub):
        p0 = 0.0
        for i in range(na):
            w0[i] = qd[act[i]]
        _substep(m, q, qd, target, kp, kd, limit, dt, gravity, cp, w, tau, anchor, engaged)
        p1 = 0.0
        for i in range(na):
            p0 += abs(tau[i] * w0[i])
            p1 += abs(tau[i] * qd[act[i]])
        power_sum += p0
        energy += 0.5 * (p0 + p1) * dt
        for f in range(2):
            for c in range(3):
                foot_sum[f, c] += w.foot[f, c]
        finite = True
        for i in range(q.shape[0]):
            if not (np.isfinite(q[i]) and np.isfinite(qd[i])):
                finite = False
        if not finite:
            ok = False
            break
    return tau, foot_sum / n_sub, power_sum / n_sub, energy, ok


@nb.njit(cache=True)
def mass_matrix_and_bias(m, q, qd, gravity):
    w = make_work(q.shape[0])
    _mass_matrix_and_bias(m, q, qd, gravity, w)
    return w.M.copy(), -w.Q.copy()


@nb.njit(cache=True)
def body_states(m, q, qd):
    """(R, pos, omega, vel) of every body frame in world coordinates."""
    w = make_work(q.shape[0])
    _kinematics(m, q, qd, w)
    return w.R.copy(), w.pos.copy(), w.omega.copy(), w.vel.copy()


@nb.njit(cache=True)
def probe(m, q, qd, feet, sole, root, head):
    """Task-space quantities the environment reads after each policy step.

    Returns (feet_pos (2,3), feet_vel (2,3), lowest contact-point height,
    all body origins (n,3), root rotation, root angular velocity, head position).
    """
    w = make_work(q.shape[0])
    _kinematics(m, q, qd, w)
    R, pos, omega, vel = w.R, w.pos, w.omega, w.vel
    fp = np.empty((2, 3))
    fv = np.empty((2, 3))
    for f in range(2):
        b = feet[f]
        rx, ry, rz = _matvec(R[b], sole[0], sole[1], sole[2])
        fp[f, 0], fp[f, 1], fp[f, 2] = pos[b, 0] + rx, pos[b, 1] + ry, pos[b, 2] + rz
        cx, cy, cz = _cross(omega[b, 0], omega[b, 1], omega[b, 2], rx, ry, rz)
        fv[f, 0], fv[f, 1], fv[f, 2] = vel[b, 0] + cx, vel[b, 1] + cy, vel[b, 2] + cz
    lowest = np.inf
    for k in range(m.contact_body.shape[0]):
        b = m.contact_body[k]
        p = m.contact_point[k]
        z = pos[b, 2] + R[b, 2, 0] * p[0] + R[b, 2, 1] * p[1] + R[b, 2, 2] * p[2]
        lowest = min(lowest, z)
    hx, hy, hz = _matvec(R[root], head[0], head[1], head[2])
    head_pos = np.array([pos[root, 0] + hx, pos[root, 1] + hy, pos[root, 2] + hz])
    return fp, fv, lowest, pos.copy(), R[root].copy(), omega[root].copy(), head_pos


@nb.njit(cache=True)
def mechanical_energy(m, q, qd, gravity):
    w = make_work(q.shape[0])
    _mass_matrix_and_bias(m, q, qd, gravity, w)
    kinetic = 0.5 * qd @ (w.M @ qd)
    potential = 0.0
    for b in range(q.shape[0]):
        cz = w.pos[b, 2] + (w.R[b] @ m.com[b])[2]
        potential += m.mass[b] * gravity * cz
    return kinetic, potential


# ---------------------------------------------------------------------------
# model builders

def _box_inertia(mass: float, sx: float, sy: float, sz: float) -> np.ndarray:
    return mass / 12.0 * np.diag([sy**2 + sz**2, sx**2 + sz**2, sx**2 + sy**2])


_X, _Y, _Z = np.eye(3)

THIGH = 0.40
SHANK = 0.40
ANKLE_HEIGHT = 0.08
TORSO_LENGTH = 0.84
HIP_HALF_WIDTH = 0.06
HEEL, TOE, SOLE_HALF_WIDTH = -0.05, 0.15, 0.04

# paper-scale anchor: 62 kg, 1.72 m standing height
MASS_TORSO = 31.0
MASS_THIGH = 8.0
MASS_SHANK = 5.0
MASS_FOOT = 2.5

# 12-slot joint order shared by both models, right leg then left leg
JOINT_SLOTS = [
    f"{side}_{j}" for side in ("R", "L")
    for j in ("HIP_P", "HIP_R", "HIP_Y", "KNEE", "ANKLE_R", "ANKLE_P")
]


class _Builder:
    def __init__(self):
        self.rows: list[dict] = []

    def add(self, name, parent, jtype, axis, offset=(0, 0, 0), mass=0.0,
            com=(0, 0, 0), inertia=None):
        self.rows.append(dict(
            name=name, parent=-1 if parent is None else self.index(parent),
            jtype=jtype, axis=np.asarray(axis, float), offset=np.asarray(offset, float),
            mass=float(mass), com=np.asarray(com, float),
            inertia=np.zeros((3, 3)) if inertia is None else np.asarray(inertia, float),
        ))
        return name

    def index(self, name):
        return [r["name"] for r in self.rows].index(name)

    def stack(self, key, dtype=float):
        return np.ascontiguousarray(np.array([r[key] for r in self.rows], dtype=dtype))


def _finish(b: _Builder, contacts, actuated_names, joint_names, root, height, **extras):
    return MultibodyModel(
        body_names=[r["name"] for r in b.rows],
        parent=b.stack("parent", np.int64),
        jtype=b.stack("jtype", np.int64),
        axis=b.stack("axis"),
        offset=b.stack("offset"),
        mass=b.stack("mass"),
        com=b.stack("com"),
        inertia=b.stack("inertia"),
        contact_body=np.array([b.index(c[0]) for c in contacts], np.int64),
        contact_point=np.ascontiguousarray(np.array([c[1] for c in contacts], float)),
        contact_foot=np.array([c[2] for c in contacts], np.int64),
        actuated=np.array([b.index(n) for n in actuated_names], np.int64),
        joint_names=list(joint_names),
        root_body=b.index(root),
        head_point=np.array([0.0, 0.0, TORSO_LENGTH]),
        height=height,
        extras=extras,
    )


def planar_biped() -> MultibodyModel:
    """Sagittal-plane biped: torso, thighs, shanks and flat feet.

    Three virtual base joints (x, z, pitch) and six actuated pitch joints.
    Legs carry a constant lateral offset, which is inert for the planar
    dynamics but gives feet their nominal lateral placement.
    """
    b = _Builder()
    b.add("base_x", None, PRISMATIC, _X)
    b.add("base_z", "base_x", PRISMATIC, _Z)
    b.add("torso", "base_z", REVOLUTE, _Y, mass=MASS_TORSO, com=(0, 0, 0.3),
          inertia=_box_inertia(MASS_TORSO, 0.25, 0.35, TORSO_LENGTH))
    contacts = []
    actuated = []
    for foot_id, (side, sy) in enumerate((("R", -1.0), ("L", 1.0))):
        b.add(f"{side}_thigh", "torso", REVOLUTE, _Y, offset=(0, sy * HIP_HALF_WIDTH, 0),
              mass=MASS_THIGH, com=(0, 0, -THIGH / 2),
              inertia=_box_inertia(MASS_THIGH, 0.1, 0.1, THIGH))
        b.add(f"{side}_shank", f"{side}_thigh", REVOLUTE, _Y, offset=(0, 0, -THIGH),
              mass=MASS_SHANK, com=(0, 0, -SHANK / 2),
              inertia=_box_inertia(MASS_SHANK, 0.08, 0.08, SHANK))
        b.add(f"{side}_foot", f"{side}_shank", REVOLUTE, _Y, offset=(0, 0, -SHANK),
              mass=MASS_FOOT, com=((HEEL + TOE) / 2, 0, -ANKLE_HEIGHT / 2),
              inertia=_box_inertia(MASS_FOOT, TOE - HEEL, 2 * SOLE_HALF_WIDTH, ANKLE_HEIGHT))
        for x in (HEEL, TOE):
            contacts.append((f"{side}_foot", (x, 0.0, -ANKLE_HEIGHT), foot_id))
        actuated += [f"{side}_thigh", f"{side}_shank", f"{side}_foot"]
    names = [f"{s}_{j}" for s in ("R", "L") for j in ("HIP_P", "KNEE", "ANKLE_P")]
    slots = [JOINT_SLOTS.index(n) for n in names]
    return _finish(b, contacts, actuated, names, "torso",
                   height=ANKLE_HEIGHT + SHANK + THIGH + TORSO_LENGTH,
                   slots=np.array(slots), planar=True,
                   base=dict(x=0, z=1, pitch=2))


def toy3d_biped() -> MultibodyModel:
    """Spatial biped with a 6-DoF virtual base and six joints per leg.

    Leg chain: hip yaw, hip roll, hip pitch, knee, ankle pitch, ankle roll.
    Base orientation uses ZYX Euler joints (yaw, pitch, roll).
    """
    b = _Builder()
    b.add("base_x", None, PRISMATIC, _X)
    b.add("base_y", "base_x", PRISMATIC, _Y)
    b.add("base_z", "base_y", PRISMATIC, _Z)
    b.add("base_yaw", "base_z", REVOLUTE, _Z)
    b.add("base_pitch", "base_yaw", REVOLUTE, _Y)
    b.add("torso", "base_pitch", REVOLUTE, _X, mass=MASS_TORSO, com=(0, 0, 0.3),
          inertia=_box_inertia(MASS_TORSO, 0.25, 0.35, TORSO_LENGTH))
    link = 0.5
    contacts = []
    by_slot = {}
    for foot_id, (side, sy) in enumerate((("R", -1.0), ("L", 1.0))):
        small = _box_inertia(link, 0.05, 0.05, 0.05)
        by_slot[f"{side}_HIP_Y"] = b.add(f"{side}_hip_yaw", "torso", REVOLUTE, _Z,
                                         offset=(0, sy * HIP_HALF_WIDTH, 0),
                                         mass=link, inertia=small)
        by_slot[f"{side}_HIP_R"] = b.add(f"{side}_hip_roll", f"{side}_hip_yaw", REVOLUTE, _X,
                                         mass=link, inertia=small)
        by_slot[f"{side}_HIP_P"] = b.add(
            f"{side}_thigh", f"{side}_hip_roll", REVOLUTE, _Y,
            mass=MASS_THIGH - 2 * link, com=(0, 0, -THIGH / 2),
            inertia=_box_inertia(MASS_THIGH - 2 * link, 0.1, 0.1, THIGH))
        by_slot[f"{side}_KNEE"] = b.add(
            f"{side}_shank", f"{side}_thigh", REVOLUTE, _Y, offset=(0, 0, -THIGH),
            mass=MASS_SHANK - link, com=(0, 0, -SHANK / 2),
            inertia=_box_inertia(MASS_SHANK - link, 0.08, 0.08, SHANK))
        by_slot[f"{side}_ANKLE_P"] = b.add(f"{side}_ankle", f"{side}_shank", REVOLUTE, _Y,
                                           offset=(0, 0, -SHANK), mass=link, inertia=small)
        by_slot[f"{side}_ANKLE_R"] = b.add(
            f"{side}_foot", f"{side}_ankle", REVOLUTE, _X,
            mass=MASS_FOOT, com=((HEEL + TOE) / 2, 0, -ANKLE_HEIGHT / 2),
            inertia=_box_inertia(MASS_FOOT, TOE - HEEL, 2 * SOLE_HALF_WIDTH, ANKLE_HEIGHT))
        for x in (HEEL, TOE):
            for y in (-SOLE_HALF_WIDTH, SOLE_HALF_WIDTH):
                contacts.append((f"{side}_foot", (x, y, -ANKLE_HEIGHT), foot_id))
    actuated = [by_slot[n] for n in JOINT_SLOTS]
    return _finish(b, contacts, actuated, JOINT_SLOTS, "torso",
                   height=ANKLE_HEIGHT + SHANK + THIGH + TORSO_LENGTH,
                   slots=np.arange(12), planar=False,
                   base=dict(x=0, y=1, z=2, yaw=3, pitch=4, roll=5))
