"""Parametric articulated hands: morphology description, forward kinematics
and the hand coordinate frame (heading direction, twist, grasp midpoint).

Kinematic convention: each link stores an offset from its parent's
reference point and up to three joint axes. The joint rotation acts at the
parent's reference point, so

    p_i = p_parent + R_parent * R_joint_i(q_i) * offset_i
    R_i = R_parent * R_joint_i(q_i)

which makes every link position the world position of a skeleton joint
(fingertips included). Multi-axis joints compose intrinsically in axis
order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rotations import (
    mat_to_quat,
    quat_from_axis_angle,
    quat_mul,
    quat_normalize,
    quat_rotate,
    quat_to_mat,
    wrap_positive,
)

PRESET_DIR = Path(__file__).parent / "presets"
PRESET_NAMES = ("mano45", "shadow22", "allegro16", "faive30")

_X = np.array([1.0, 0.0, 0.0])
_Y = np.array([0.0, 1.0, 0.0])


class DimensionMismatch(Exception):
    pass


class GimbalDegenerate(Exception):
    pass


@dataclass
class Link:
    parent: int
    offset: np.ndarray  # (3,) meters, from the parent reference point
    axes: np.ndarray  # (k, 3) unit axes, k in 0..3
    limits: np.ndarray  # (k, 2) radians
    radius: float  # collision sphere radius
    inertia: float = 2e-4  # effective per-axis inertia, kg m^2
    kp: float = 2.0
    kd: float = 0.05


@dataclass
class WristPose:
    position: np.ndarray  # (3,)
    orientation: np.ndarray  # quaternion (4,), unit

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.orientation = quat_normalize(np.asarray(self.orientation, dtype=float))

    @staticmethod
    def identity() -> "WristPose":
        return WristPose(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))


@dataclass
class HandMorphology:
    name: str
    links: list[Link]
    thumb_tip_link: int
    middle_third_joint_link: int
    wrist_pd_gains: tuple[float, float]
    open_pose: np.ndarray = None
    total_dof: int = field(init=False)

    def __post_init__(self):
        L = len(self.links)
        if not (0 <= self.thumb_tip_link < L and 0 <= self.middle_third_joint_link < L):
            raise ValueError("frame link indices out of range")
        dofs = 0
        for i, link in enumerate(self.links):
            link.offset = np.asarray(link.offset, dtype=float)
            link.axes = np.asarray(link.axes, dtype=float).reshape(-1, 3)
            link.limits = np.asarray(link.limits, dtype=float).reshape(-1, 2)
            if len(link.axes) != len(link.limits):
                raise ValueError(f"link {i}: axes/limits count mismatch")
            if link.parent >= i or (i == 0) != (link.parent < 0):
                raise ValueError("links must be a topologically ordered tree rooted at 0")
            if i == 0 and len(link.axes):
                raise ValueError("root link carries the wrist frame and has no joint axes")
            if np.any(link.limits[:, 0] > link.limits[:, 1]):
                raise ValueError(f"link {i}: limit low > high")
            if link.radius <= 0:
                raise ValueError(f"link {i}: radius must be > 0")
            for k in range(len(link.axes)):
                link.axes[k] = link.axes[k] / np.linalg.norm(link.axes[k])
            dofs += len(link.axes)
        self.total_dof = dofs
        if self.open_pose is None:
            self.open_pose = np.array(
                [0.5 * (lo + hi) for lk in self.links for lo, hi in lk.limits]
            )
        self.open_pose = np.asarray(self.open_pose, dtype=float)
        if len(self.open_pose) != dofs:
            raise ValueError("open_pose length mismatch")
        self._precompute()

    def _precompute(self):
        L = len(self.links)
        self.parent_index = np.array([lk.parent for lk in self.links])
        self.radii = np.array([lk.radius for lk in self.links])
        depth = np.zeros(L, dtype=int)
        for i in range(1, L):
            depth[i] = depth[self.links[i].parent] + 1
        self.levels = [np.flatnonzero(depth == d) for d in range(depth.max() + 1)]

        # flat-dof bookkeeping
        dof_link, dof_slot, dof_axis = [], [], []
        lo, hi, kp, kd, inertia = [], [], [], [], []
        start = {}
        d = 0
        for i, lk in enumerate(self.links):
            start[i] = d
            for s in range(len(lk.axes)):
                dof_link.append(i)
                dof_slot.append(s)
                dof_axis.append(lk.axes[s])
                lo.append(lk.limits[s, 0])
                hi.append(lk.limits[s, 1])
                kp.append(lk.kp)
                kd.append(lk.kd)
                inertia.append(lk.inertia)
                d += 1
        self.dof_link = np.array(dof_link, dtype=int)
        self.dof_slot = np.array(dof_slot, dtype=int)
        self.dof_axis = np.array(dof_axis, dtype=float).reshape(-1, 3)
        self.limits_low = np.array(lo)
        self.limits_high = np.array(hi)
        self.joint_kp = np.array(kp)
        self.joint_kd = np.array(kd)
        self.joint_inertia = np.array(inertia)
        self.pad_rows = self.dof_link
        self.pad_cols = self.dof_slot

        # per-link ordered ancestor dof indices (root -> link)
        self.ancestor_dofs = []
        for i in range(L):
            path = []
            j = i
            while j >= 0:
                path.append(j)
                j = self.links[j].parent
            dofs = []
            for j in reversed(path):
                dofs.extend(range(start[j], start[j] + len(self.links[j].axes)))
            self.ancestor_dofs.append(np.array(dofs, dtype=int))

        # flattened per-link plan for the scalar FK inner loop
        self._fk_plan = []
        for i, lk in enumerate(self.links):
            axes = [
                (start[i] + s, (float(a[0]), float(a[1]), float(a[2])))
                for s, a in enumerate(lk.axes)
            ]
            off = (float(lk.offset[0]), float(lk.offset[1]), float(lk.offset[2]))
            self._fk_plan.append((lk.parent, off, axes))

        # conservative wrist-to-link-surface reach bound for broad phases
        depth_reach = np.zeros(L)
        for i, lk in enumerate(self.links):
            base = depth_reach[lk.parent] if lk.parent >= 0 else 0.0
            depth_reach[i] = base + float(np.linalg.norm(lk.offset))
        self._reach = float((depth_reach + self.radii).max()) + 0.01

    def clamp_to_limits(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.limits_low, self.limits_high)

    def flexion_dof_mask(self) -> np.ndarray:
        """True for DoF whose axis is a flexion hinge (about local z);
        positive motion closes the digit in every shipped preset."""
        return np.abs(self.dof_axis[:, 2]) > 0.9

    def pad_per_link(self, flat: np.ndarray) -> np.ndarray:
        """Flat per-dof vector -> (L, 3) array, missing axes zero-filled."""
        out = np.zeros((len(self.links), 3))
        out[self.pad_rows, self.pad_cols] = flat
        return out


@dataclass
class FkResult:
    positions: np.ndarray  # (L, 3)
    quats: np.ndarray  # (L, 4)
    axis_world: np.ndarray | None = None  # (total_dof, 3)
    axis_center: np.ndarray | None = None  # (total_dof, 3) rotation centers


def forward_kinematics(
    morph: HandMorphology, wrist: WristPose, q: np.ndarray, with_axes: bool = False
) -> FkResult:
    """World position (and frame) of every link; optionally the world joint
    axes and rotation centers needed for Jacobian products.

    Implemented as a scalar chain: hand-sized problems are dominated by
    numpy per-call overhead, not arithmetic.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (morph.total_dof,):
        raise DimensionMismatch(f"expected {morph.total_dof} joint values, got {q.shape}")
    angles = q.tolist()
    sin, cos = math.sin, math.cos
    pos: list = [None] * len(morph.links)
    quats: list = [None] * len(morph.links)
    axes_out: list = [None] * morph.total_dof if with_axes else None
    centers_out: list = [None] * morph.total_dof if with_axes else None

    px, py, pz = (float(v) for v in wrist.position)
    rw, rx, ry, rz = (float(v) for v in wrist.orientation)

    for i, (parent, off, axes) in enumerate(morph._fk_plan):
        if parent < 0:
            bw, bx, by, bz = rw, rx, ry, rz
            bpx, bpy, bpz = px, py, pz
        else:
            bw, bx, by, bz = quats[parent]
            bpx, bpy, bpz = pos[parent]
        jw, jx, jy, jz = bw, bx, by, bz
        for dof, (ax, ay, az) in axes:
            if with_axes:
                # world axis before this slot's own rotation; center at parent
                tx = 2.0 * (jy * az - jz * ay)
                ty = 2.0 * (jz * ax - jx * az)
                tz = 2.0 * (jx * ay - jy * ax)
                axes_out[dof] = (
                    ax + jw * tx + (jy * tz - jz * ty),
                    ay + jw * ty + (jz * tx - jx * tz),
                    az + jw * tz + (jx * ty - jy * tx),
                )
                centers_out[dof] = (bpx, bpy, bpz)
            half = 0.5 * angles[dof]
            s, c = sin(half), cos(half)
            gw, gx, gy, gz = c, ax * s, ay * s, az * s
            jw, jx, jy, jz = (
                jw * gw - jx * gx - jy * gy - jz * gz,
                jw * gx + jx * gw + jy * gz - jz * gy,
                jw * gy - jx * gz + jy * gw + jz * gx,
                jw * gz + jx * gy - jy * gx + jz * gw,
            )
        ox, oy, oz = off
        tx = 2.0 * (jy * oz - jz * oy)
        ty = 2.0 * (jz * ox - jx * oz)
        tz = 2.0 * (jx * oy - jy * ox)
        pos[i] = (
            bpx + ox + jw * tx + (jy * tz - jz * ty),
            bpy + oy + jw * ty + (jz * tx - jx * tz),
            bpz + oz + jw * tz + (jx * ty - jy * tx),
        )
        quats[i] = (jw, jx, jy, jz)

    return FkResult(
        np.array(pos),
        np.array(quats),
        np.array(axes_out) if with_axes else None,
        np.array(centers_out) if with_axes else None,
    )


def midpoint(link_positions: np.ndarray, morph: HandMorphology) -> np.ndarray:
    """Grasp center: mean of the thumb tip and the middle finger's third
    joint positions."""
    return 0.5 * (
        link_positions[morph.thumb_tip_link] + link_positions[morph.middle_third_joint_link]
    )


def heading_and_twist(wrist, canonical_y) -> tuple[np.ndarray, float]:
    """Decompose a wrist orientation into heading direction v (local +x in
    world) and twist angle about v measured from the canonical y direction,
    wrapped to [0, 2*pi)."""
    quat = wrist.orientation if isinstance(wrist, WristPose) else np.asarray(wrist, dtype=float)
    w, x, y, z = (float(c) for c in quat)
    # columns of the rotation matrix: local +x and +y in world coordinates
    vx = 1.0 - 2.0 * (y * y + z * z)
    vy = 2.0 * (x * y + z * w)
    vz = 2.0 * (x * z - y * w)
    hx = 2.0 * (x * y - z * w)
    hy = 1.0 - 2.0 * (x * x + z * z)
    hz = 2.0 * (y * z + x * w)
    cx, cy_, cz = (float(c) for c in canonical_y)
    dot = cx * vx + cy_ * vy + cz * vz
    cx, cy_, cz = cx - dot * vx, cy_ - dot * vy, cz - dot * vz
    n = math.sqrt(cx * cx + cy_ * cy_ + cz * cz)
    if n < 1e-6:
        raise GimbalDegenerate("canonical y is parallel to the heading direction")
    cx, cy_, cz = cx / n, cy_ / n, cz / n
    crx = cy_ * hz - cz * hy
    cry = cz * hx - cx * hz
    crz = cx * hy - cy_ * hx
    omega = math.atan2(vx * crx + vy * cry + vz * crz, cx * hx + cy_ * hy + cz * hz)
    if omega < 0.0:
        omega += 2.0 * math.pi
    return np.array([vx, vy, vz]), omega


def rotate_about(vec, axis, angle):
    """Rodrigues rotation of vec about unit axis by angle."""
    vx, vy, vz = (float(c) for c in vec)
    ax, ay, az = (float(c) for c in axis)
    c, s = math.cos(angle), math.sin(angle)
    dot = (ax * vx + ay * vy + az * vz) * (1.0 - c)
    return np.array(
        [
            vx * c + (ay * vz - az * vy) * s + ax * dot,
            vy * c + (az * vx - ax * vz) * s + ay * dot,
            vz * c + (ax * vy - ay * vx) * s + az * dot,
        ]
    )


def orientation_from_heading_twist(v_bar, omega_bar, canonical_y) -> np.ndarray:
    """Quaternion with local +x along v_bar and local +y at twist omega_bar
    from canonical_y (inverse of heading_and_twist)."""
    v = np.asarray(v_bar, dtype=float)
    v = v / np.linalg.norm(v)
    cy = np.asarray(canonical_y, dtype=float)
    cy = cy - (cy @ v) * v
    n = np.linalg.norm(cy)
    if n < 1e-6:
        raise GimbalDegenerate("canonical y is parallel to the heading direction")
    cy = cy / n
    y_h = rotate_about(cy, v, omega_bar)
    m = np.stack([v, y_h, np.cross(v, y_h)], axis=1)
    return mat_to_quat(m)


def wrist_to_matrix(wrist: WristPose) -> np.ndarray:
    return quat_to_mat(wrist.orientation)


# ---------------------------------------------------------------------------
# morphology JSON io


def morphology_from_dict(data: dict) -> HandMorphology:
    links = [
        Link(
            parent=int(lk["parent"]),
            offset=np.array(lk["offset"], dtype=float),
            axes=np.array(lk.get("axes", []), dtype=float).reshape(-1, 3),
            limits=np.array(lk.get("limits", []), dtype=float).reshape(-1, 2),
            radius=float(lk["radius"]),
            inertia=float(lk.get("inertia", 2e-4)),
            kp=float(lk.get("kp", 2.0)),
            kd=float(lk.get("kd", 0.05)),
        )
        for lk in data["links"]
    ]
    return HandMorphology(
        name=data["name"],
        links=links,
        thumb_tip_link=int(data["thumb_tip_link"]),
        middle_third_joint_link=int(data["middle_third_joint_link"]),
        wrist_pd_gains=tuple(data["wrist_pd_gains"]),
        open_pose=np.array(data["open_pose"], dtype=float) if "open_pose" in data else None,
    )


def morphology_to_dict(morph: HandMorphology) -> dict:
    return {
        "name": morph.name,
        "wrist_pd_gains": list(morph.wrist_pd_gains),
        "thumb_tip_link": morph.thumb_tip_link,
        "middle_third_joint_link": morph.middle_third_joint_link,
        "open_pose": morph.open_pose.tolist(),
        "links": [
            {
                "parent": lk.parent,
                "offset": lk.offset.tolist(),
                "axes": lk.axes.tolist(),
                "limits": lk.limits.tolist(),
                "radius": lk.radius,
                "inertia": lk.inertia,
                "kp": lk.kp,
                "kd": lk.kd,
            }
            for lk in morph.links
        ],
    }


def load_morphology(path) -> HandMorphology:
    with open(path) as fh:
        return morphology_from_dict(json.load(fh))


def load_preset(name: str) -> HandMorphology:
    path = PRESET_DIR / f"{name}.json"
    if not path.exists():
        raise FileNotFoundError(f"unknown morphology preset {name!r}")
    return load_morphology(path)
