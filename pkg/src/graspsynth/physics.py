"""Fixed-timestep rigid-body simulation for one hand and one object.

Simplifications relative to a full articulated-body solver:
  - finger joints integrate as decoupled second-order systems driven by PD
    torques plus Jacobian-transpose contact torques,
  - the wrist is a 6-DoF floating double integrator with its own PD,
  - contacts are penalty forces between per-link collision spheres and the
    object's surface point cloud (spring-damper normal, viscous tangential
    force capped by Coulomb friction),
  - an optional horizontal plane supports the object (not the hand).

The hand is actuated and gravity-compensated; gravity acts on the object
only. Everything is float64 and free of hidden randomness: identical
inputs produce bitwise-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import GRASPABLE, ObjectAsset
from .hand import (
    FkResult,
    HandMorphology,
    WristPose,
    forward_kinematics,
    midpoint,
    orientation_from_heading_twist,
)
from .rotations import (
    cross3,
    quat_conj,
    quat_from_rotvec,
    quat_integrate,
    quat_mul,
    quat_rotate,
    quat_to_mat,
    rotvec_from_quat,
)


class NumericalBlowup(Exception):
    """A state magnitude exceeded the sanity limit; truncate the episode."""


@dataclass
class PhysicsConfig:
    dt: float = 2.5e-3  # simulation timestep, seconds
    substeps: int = 4  # simulation steps per control action
    gravity: float = 9.81
    contact_kn: float = 2000.0  # normal stiffness, N/m
    contact_cn: float = 20.0  # normal damping on approach, N s/m
    contact_ks: float = 500.0  # tangential anchor-spring stiffness, N/m
    contact_kt: float = 10.0  # tangential viscous damping, N s/m
    friction_mu: float = 0.8
    contact_lateral_margin: float = 0.02  # m, rejects off-surface phantom contacts
    joint_damping: float = 1e-3  # N m s per rad/s
    rolling_damping: float = 2e-3  # N m s, object spin drag while in contact
    finger_torque_limit: float = 5.0  # N m per finger DoF
    wrist_force_limit: float = 100.0  # N
    wrist_torque_limit: float = 20.0  # N m
    wrist_mass: float = 0.5  # kg
    wrist_inertia: float = 0.05  # kg m^2, isotropic
    blowup_limit: float = 1e6


@dataclass
class SimState:
    q: np.ndarray  # (dof,) rad
    q_dot: np.ndarray  # (dof,) rad/s
    wrist: WristPose
    wrist_vel: np.ndarray  # (6,) linear m/s + angular rad/s
    object_pos: np.ndarray  # (3,)
    object_quat: np.ndarray  # (4,)
    object_vel: np.ndarray  # (6,)
    contacts_plus: np.ndarray  # (L,) {0,1}
    contacts_minus: np.ndarray  # (L,)
    forces_plus: np.ndarray  # (L,) newtons
    forces_minus: np.ndarray  # (L,)
    pd_error: np.ndarray  # (dof,) rad
    time: float = 0.0
    # friction anchor state (object-frame stick points of the bristle model)
    anchors: np.ndarray | None = None  # (L, 3)
    anchors_active: np.ndarray | None = None  # (L,) {0,1}
    plane_anchor: np.ndarray | None = None  # (2,)
    plane_anchor_active: int = 0

    def __post_init__(self):
        L = len(self.contacts_plus)
        if self.anchors is None:
            self.anchors = np.zeros((L, 3))
        if self.anchors_active is None:
            self.anchors_active = np.zeros(L, dtype=np.int64)
        if self.plane_anchor is None:
            self.plane_anchor = np.zeros(2)

    @staticmethod
    def initial(morph: HandMorphology, wrist: WristPose, q: np.ndarray) -> "SimState":
        L = len(morph.links)
        return SimState(
            q=np.asarray(q, dtype=float).copy(),
            q_dot=np.zeros(morph.total_dof),
            wrist=wrist,
            wrist_vel=np.zeros(6),
            object_pos=np.zeros(3),
            object_quat=np.array([1.0, 0.0, 0.0, 0.0]),
            object_vel=np.zeros(6),
            contacts_plus=np.zeros(L, dtype=np.int64),
            contacts_minus=np.zeros(L, dtype=np.int64),
            forces_plus=np.zeros(L),
            forces_minus=np.zeros(L),
            pd_error=np.zeros(morph.total_dof),
        )


@dataclass
class ObjectBody:
    """Episode binding of an object: asset plus mass properties, partition
    labels and the optional support plane height."""

    asset: ObjectAsset
    mass: float
    inertia: np.ndarray  # (3, 3) about the centroid, body frame
    static_flag: bool = False
    labels: np.ndarray | None = None  # per-point graspable partition
    plane_z: float | None = None

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float)
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.labels is None:
            self.labels = self.asset.cloud.labels
        if self.asset.cloud.normals is None:
            raise ValueError("object cloud must carry outward normals for contact")
        self._pts = self.asset.cloud.points
        self._pts_sq = np.einsum("ij,ij->i", self._pts, self._pts)
        self._normals = self.asset.cloud.normals
        self._inv_inertia = np.linalg.inv(self.inertia)
        self._bound_radius = float(np.sqrt(self._pts_sq.max())) if len(self._pts) else 0.0


@dataclass
class PDCommand:
    """PD targets: absolute finger joint targets plus wrist pose offsets
    (3 translation meters, 3 rotation-vector radians) relative to the wrist
    pose at command time."""

    joint_targets: np.ndarray
    wrist_targets: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        self.joint_targets = np.asarray(self.joint_targets, dtype=float)
        self.wrist_targets = np.asarray(self.wrist_targets, dtype=float)


@dataclass
class ContactResult:
    link_forces: np.ndarray  # (L, 3) world forces on the hand links
    contact_points: np.ndarray  # (L, 3) world application points
    contact_mask: np.ndarray  # (L,) bool
    object_wrench: np.ndarray  # (6,) force + torque about the object origin
    c_plus: np.ndarray
    c_minus: np.ndarray
    f_plus: np.ndarray
    f_minus: np.ndarray
    anchors: np.ndarray | None = None  # (L, 3) updated object-frame stick points
    anchors_active: np.ndarray | None = None  # (L,)


def _clip_norm(vec: np.ndarray, limit: float) -> np.ndarray:
    n = np.linalg.norm(vec)
    if n > limit:
        return vec * (limit / n)
    return vec


def pd_torque(
    cmd: PDCommand, state: SimState, morph: HandMorphology, cfg: PhysicsConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Actuator torques for all finger DoF plus the 6 wrist components.

    Finger targets clamp to the joint limits before the error is formed;
    the returned tracking error is against the clamped target. The wrist
    error equals the commanded pose offsets.
    """
    if cmd.joint_targets.shape != (morph.total_dof,):
        raise_dim(morph.total_dof, cmd.joint_targets.shape)
    clamped = morph.clamp_to_limits(cmd.joint_targets)
    pd_err = clamped - state.q
    tau_f = np.clip(
        morph.joint_kp * pd_err - morph.joint_kd * state.q_dot,
        -cfg.finger_torque_limit,
        cfg.finger_torque_limit,
    )
    kp_w, kd_w = morph.wrist_pd_gains
    force = _clip_norm(kp_w * cmd.wrist_targets[:3] - kd_w * state.wrist_vel[:3], cfg.wrist_force_limit)
    torque = _clip_norm(kp_w * cmd.wrist_targets[3:] - kd_w * state.wrist_vel[3:], cfg.wrist_torque_limit)
    return np.concatenate([tau_f, force, torque]), pd_err


def raise_dim(expected, got):
    from .hand import DimensionMismatch

    raise DimensionMismatch(f"expected dimension {expected}, got {got}")


def apply_wrist_guidance(
    cmd: PDCommand, state: SimState, T, morph: HandMorphology
) -> PDCommand:
    """Add the objective-tracking bias to the wrist PD targets.

    Translation bias is the midpoint difference; rotation bias is the
    axis-angle rotation taking the current orientation to the pose with
    heading v_bar and twist omega_bar. Finger targets pass through.
    """
    fk = forward_kinematics(morph, state.wrist, state.q)
    m = midpoint(fk.positions, morph)
    target_quat = orientation_from_heading_twist(T.v_bar, T.omega_bar, T.canonical_y)
    rot_bias = rotvec_from_quat(quat_mul(target_quat, quat_conj(state.wrist.orientation)))
    bias = np.concatenate([T.m_bar - m, rot_bias])
    return replace(cmd, wrist_targets=cmd.wrist_targets + bias)


def resolve_contacts(
    state: SimState,
    morph: HandMorphology,
    body: ObjectBody | None,
    cfg: PhysicsConfig,
    fk: FkResult | None = None,
) -> ContactResult:
    """Penalty contact between link spheres and the object surface cloud.

    Each link interacts with its nearest cloud point: penetration is the
    sphere radius minus the signed distance along that point's outward
    normal. The normal force is k_n * penetration plus damping on approach.
    Tangential friction is an anchor-spring (stiction) model: while a link
    stays in contact it drags a stick point frozen in the object frame and
    feels a spring force toward it plus slip damping, the whole tangential
    force capped by mu times the normal force. When the cap binds, the
    anchor slides to the cap boundary (kinetic regime)."""
    L = len(morph.links)
    empty = ContactResult(
        link_forces=np.zeros((L, 3)),
        contact_points=np.zeros((L, 3)),
        contact_mask=np.zeros(L, dtype=bool),
        object_wrench=np.zeros(6),
        c_plus=np.zeros(L, dtype=np.int64),
        c_minus=np.zeros(L, dtype=np.int64),
        f_plus=np.zeros(L),
        f_minus=np.zeros(L),
        anchors=np.zeros((L, 3)),
        anchors_active=np.zeros(L, dtype=np.int64),
    )
    if body is None:
        return empty
    if fk is None:
        fk = forward_kinematics(morph, state.wrist, state.q, with_axes=True)
    # broad phase: every link sphere further from the object's bounding
    # sphere than its radius cannot touch
    rel_wrist = state.wrist.position - state.object_pos
    reach = body._bound_radius + morph._reach
    if rel_wrist @ rel_wrist > reach * reach:
        return empty
    rot = quat_to_mat(state.object_quat)
    h_local = (fk.positions - state.object_pos) @ rot  # = R^T (h - x)
    d2 = -2.0 * h_local @ body._pts.T + body._pts_sq[None, :]
    idx = np.argmin(d2, axis=1)
    p_local = body._pts[idx]
    n_local = body._normals[idx]
    diff = h_local - p_local
    signed = np.einsum("ij,ij->i", diff, n_local)
    pen = morph.radii - signed
    # On a closed surface the offset to the nearest sample is parallel to
    # its normal; a large lateral component means the sphere is off past an
    # open boundary, not penetrating.
    lateral_sq = np.einsum("ij,ij->i", diff, diff) - signed * signed
    mask = (pen > 0.0) & (lateral_sq < cfg.contact_lateral_margin**2)
    if not mask.any():
        return empty

    result = empty
    result.contact_mask = mask
    which = np.flatnonzero(mask)
    p_world = p_local[which] @ rot.T + state.object_pos
    n_world = n_local[which] @ rot.T
    h_world = fk.positions[which]
    result.contact_points[which] = p_world

    # hand-side contact point velocities via the kinematic chain
    v_h = np.zeros((len(which), 3))
    w_pos = state.wrist.position
    v_h += state.wrist_vel[:3] + cross3(state.wrist_vel[3:], p_world - w_pos)
    for k, li in enumerate(which):
        dofs = morph.ancestor_dofs[li]
        if len(dofs):
            r = p_world[k] - fk.axis_center[dofs]
            v_h[k] += state.q_dot[dofs] @ cross3(fk.axis_world[dofs], r)

    v_o = state.object_vel[:3] + cross3(state.object_vel[3:], p_world - state.object_pos)
    v_rel = v_h - v_o
    v_n = np.einsum("ij,ij->i", v_rel, n_world)  # positive while separating
    approach = np.maximum(0.0, -v_n)
    f_n_mag = cfg.contact_kn * pen[which] + cfg.contact_cn * approach
    v_t = v_rel - v_n[:, None] * n_world

    # stiction: spring toward the object-frame stick point of each link
    was_active = state.anchors_active[which].astype(bool)
    anchor_world = state.anchors[which] @ rot.T + state.object_pos
    d_t = np.where(was_active[:, None], h_world - anchor_world, 0.0)
    d_t = d_t - np.einsum("ij,ij->i", d_t, n_world)[:, None] * n_world
    f_t = -cfg.contact_ks * d_t - cfg.contact_kt * v_t
    f_t_norm = np.linalg.norm(f_t, axis=1)
    cap = cfg.friction_mu * f_n_mag
    scale = np.where(f_t_norm > cap, cap / np.maximum(f_t_norm, 1e-12), 1.0)
    f_t = f_t * scale[:, None]
    forces = f_n_mag[:, None] * n_world + f_t
    result.link_forces[which] = forces

    # anchor update: clamp the stored tangential stretch to the cap radius
    d_t_norm = np.linalg.norm(d_t, axis=1)
    max_stretch = cap / cfg.contact_ks
    shrink = np.where(d_t_norm > max_stretch, max_stretch / np.maximum(d_t_norm, 1e-12), 1.0)
    new_anchor_world = h_world - d_t * shrink[:, None]
    result.anchors[which] = (new_anchor_world - state.object_pos) @ rot
    result.anchors_active[which] = 1

    total = np.zeros(3)
    torque = np.zeros(3)
    for k in range(len(which)):
        total += forces[k]
        torque += cross3(p_world[k] - state.object_pos, -forces[k])
    result.object_wrench[:3] = -total
    result.object_wrench[3:] = torque

    labels = body.labels[idx[which]]
    mag = np.linalg.norm(forces, axis=1)
    grasp = labels == GRASPABLE
    result.c_plus[which[grasp]] = 1
    result.c_minus[which[~grasp]] = 1
    result.f_plus[which[grasp]] = mag[grasp]
    result.f_minus[which[~grasp]] = mag[~grasp]
    return result


def _plane_wrench(
    state: SimState, body: ObjectBody, cfg: PhysicsConfig
) -> tuple[np.ndarray, np.ndarray, int]:
    """Support plane acting on the object cloud.

    Per-point normal forces carry penetration-proportional weights (sum 1),
    so a point entering the contact set contributes continuously from zero
    and the effective total stiffness stays near contact_kn regardless of
    the cloud sampling density. In-plane friction is one anchor spring on
    the object origin (stiction), capped by mu times the total normal
    force, applied at the weighted contact centroid.

    Returns (wrench, updated plane anchor, anchor active flag).
    """
    wrench = np.zeros(6)
    if body.plane_z is None:
        return wrench, np.zeros(2), 0
    # cheap broad phase: no cloud point can reach the plane
    if state.object_pos[2] - body._bound_radius > body.plane_z:
        return wrench, np.zeros(2), 0
    rot = quat_to_mat(state.object_quat)
    # only the world z coordinate decides penetration; transform the full
    # coordinates of penetrating points only
    z_w = body._pts @ rot[2] + state.object_pos[2]
    pen = body.plane_z - z_w
    mask = pen > 0.0
    if not mask.any():
        return wrench, np.zeros(2), 0
    pen = pen[mask]
    weights = pen / pen.sum()
    p = body._pts[mask] @ rot.T + state.object_pos
    v_p = state.object_vel[:3] + cross3(state.object_vel[3:], p - state.object_pos)
    f_n = weights * np.maximum(0.0, cfg.contact_kn * pen - cfg.contact_cn * v_p[:, 2])
    forces = np.zeros_like(p)
    forces[:, 2] = f_n
    wrench[:3] = forces.sum(axis=0)
    wrench[3:] = cross3(p - state.object_pos, forces).sum(axis=0)

    if state.plane_anchor_active:
        d_xy = state.object_pos[:2] - state.plane_anchor
    else:
        d_xy = np.zeros(2)
    f_t = -cfg.contact_ks * d_xy - cfg.contact_kt * state.object_vel[:2]
    f_t_norm = np.hypot(f_t[0], f_t[1])
    cap = cfg.friction_mu * f_n.sum()
    if f_t_norm > cap:
        f_t = f_t * (cap / max(f_t_norm, 1e-12))
    stretch = np.hypot(d_xy[0], d_xy[1])
    max_stretch = cap / cfg.contact_ks
    if stretch > max_stretch:
        d_xy = d_xy * (max_stretch / max(stretch, 1e-12))
    new_anchor = state.object_pos[:2] - d_xy
    centroid = weights @ p
    f_t3 = np.array([f_t[0], f_t[1], 0.0])
    wrench[:3] += f_t3
    wrench[3:] += cross3(centroid - state.object_pos, f_t3)
    return wrench, new_anchor, 1


def _check_finite(cfg: PhysicsConfig, *arrays):
    for a in arrays:
        m = np.abs(a).max() if np.size(a) else 0.0
        if not np.isfinite(m) or m > cfg.blowup_limit:
            raise NumericalBlowup(f"state magnitude {m!r} exceeds limit")


def step(
    state: SimState,
    cmd: PDCommand,
    body: ObjectBody | None,
    dt: float,
    substeps: int,
    morph: HandMorphology,
    cfg: PhysicsConfig,
    trace: list | None = None,
) -> SimState:
    """Advance the world by substeps * dt seconds under one PD command.

    The wrist pose offsets resolve to an absolute target once, at entry;
    contacts are recomputed every substep; integration is semi-implicit
    Euler throughout. Raises NumericalBlowup on runaway magnitudes.
    """
    if dt <= 0 or substeps < 1:
        raise ValueError("dt must be > 0 and substeps >= 1")
    clamped = morph.clamp_to_limits(cmd.joint_targets)
    if clamped.shape != (morph.total_dof,):
        raise_dim(morph.total_dof, clamped.shape)
    target_pos = state.wrist.position + cmd.wrist_targets[:3]
    target_quat = quat_mul(quat_from_rotvec(cmd.wrist_targets[3:]), state.wrist.orientation)
    kp_w, kd_w = morph.wrist_pd_gains

    q = state.q.copy()
    q_dot = state.q_dot.copy()
    w_pos = state.wrist.position.copy()
    w_quat = state.wrist.orientation.copy()
    w_vel = state.wrist_vel.copy()
    o_pos = state.object_pos.copy()
    o_quat = state.object_quat.copy()
    o_vel = state.object_vel.copy()
    anchors = state.anchors.copy()
    anchors_active = state.anchors_active.copy()
    plane_anchor = state.plane_anchor.copy()
    plane_anchor_active = state.plane_anchor_active
    t = state.time
    contacts = None

    for _ in range(substeps):
        cur = SimState(
            q=q, q_dot=q_dot, wrist=WristPose(w_pos, w_quat), wrist_vel=w_vel,
            object_pos=o_pos, object_quat=o_quat, object_vel=o_vel,
            contacts_plus=state.contacts_plus, contacts_minus=state.contacts_minus,
            forces_plus=state.forces_plus, forces_minus=state.forces_minus,
            pd_error=state.pd_error, time=t,
            anchors=anchors, anchors_active=anchors_active,
            plane_anchor=plane_anchor, plane_anchor_active=plane_anchor_active,
        )
        fk = forward_kinematics(morph, cur.wrist, q, with_axes=body is not None)
        contacts = resolve_contacts(cur, morph, body, cfg, fk=fk)
        anchors = contacts.anchors
        anchors_active = contacts.anchors_active

        # finger dynamics: PD + contact coupling + viscous joint damping
        pd_err = clamped - q
        tau = np.clip(
            morph.joint_kp * pd_err - morph.joint_kd * q_dot,
            -cfg.finger_torque_limit,
            cfg.finger_torque_limit,
        )
        if contacts.contact_mask.any():
            for li in np.flatnonzero(contacts.contact_mask):
                dofs = morph.ancestor_dofs[li]
                if len(dofs):
                    r = contacts.contact_points[li] - fk.axis_center[dofs]
                    tau[dofs] += np.einsum(
                        "ij,ij->i", fk.axis_world[dofs], cross3(r, contacts.link_forces[li])
                    )
        q_ddot = (tau - cfg.joint_damping * q_dot) / morph.joint_inertia
        q_dot = q_dot + dt * q_ddot
        q = q + dt * q_dot

        # wrist dynamics: PD toward the frozen target plus contact reaction
        force = _clip_norm(kp_w * (target_pos - w_pos) - kd_w * w_vel[:3], cfg.wrist_force_limit)
        rot_err = rotvec_from_quat(quat_mul(target_quat, quat_conj(w_quat)))
        torque = _clip_norm(kp_w * rot_err - kd_w * w_vel[3:], cfg.wrist_torque_limit)
        react_f = contacts.link_forces.sum(axis=0)
        react_t = cross3(
            contacts.contact_points[contacts.contact_mask] - w_pos,
            contacts.link_forces[contacts.contact_mask],
        ).sum(axis=0) if contacts.contact_mask.any() else np.zeros(3)
        w_vel = w_vel + dt * np.concatenate(
            [(force + react_f) / cfg.wrist_mass, (torque + react_t) / cfg.wrist_inertia]
        )
        w_pos = w_pos + dt * w_vel[:3]
        w_quat = quat_integrate(w_quat, w_vel[3:], dt)

        # object dynamics
        if body is not None and not body.static_flag:
            plane, plane_anchor, plane_anchor_active = _plane_wrench(cur, body, cfg)
            wrench = contacts.object_wrench + plane
            f_o = wrench[:3] + np.array([0.0, 0.0, -cfg.gravity * body.mass])
            rot_o = quat_to_mat(o_quat)
            inertia_w = rot_o @ body.inertia @ rot_o.T
            omega = o_vel[3:]
            torque_o = wrench[3:] - cross3(omega, inertia_w @ omega)
            if contacts.contact_mask.any() or plane.any():
                # rolling resistance: spin drag only while touching something
                torque_o = torque_o - cfg.rolling_damping * omega
            ang_acc = np.linalg.solve(inertia_w, torque_o)
            o_vel = o_vel + dt * np.concatenate([f_o / body.mass, ang_acc])
            o_pos = o_pos + dt * o_vel[:3]
            o_quat = quat_integrate(o_quat, o_vel[3:], dt)

        t += dt
        _check_finite(cfg, q, q_dot, w_pos, w_vel, o_pos, o_vel)
        if trace is not None:
            trace.append(
                {
                    "time": t,
                    "hand_force_sum": contacts.link_forces.sum(axis=0),
                    "object_hand_force": contacts.object_wrench[:3].copy(),
                    "n_contacts": int(contacts.contact_mask.sum()),
                }
            )

    return SimState(
        q=q,
        q_dot=q_dot,
        wrist=WristPose(w_pos, w_quat),
        wrist_vel=w_vel,
        object_pos=o_pos,
        object_quat=o_quat,
        object_vel=o_vel,
        contacts_plus=contacts.c_plus,
        contacts_minus=contacts.c_minus,
        forces_plus=contacts.f_plus,
        forces_minus=contacts.f_minus,
        pd_error=clamped - q,
        time=t,
        anchors=anchors,
        anchors_active=anchors_active,
        plane_anchor=plane_anchor,
        plane_anchor_active=plane_anchor_active,
    )
