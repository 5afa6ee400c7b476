"""Reward terms for objective-driven grasping.

Total reward splits into a goal part (distance shaping plus heading, twist
and midpoint alignment) and a grasp part (contact and force terms with a
weight-proportional force cap, velocity regularization, joint-limit
anatomy penalty). Two weight presets implement the curriculum phases:
phase 1 emphasizes objective tracking on static objects, phase 2 shifts
weight toward contact forces on movable objects.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .geometry import GRASPABLE, NON_GRASPABLE, nearest_vectors
from .hand import HandMorphology, forward_kinematics, heading_and_twist, midpoint
from .rotations import quat_to_mat, wrap_angle

GRAVITY = 9.81
# Distances to the non-graspable set saturate here; the raw quadratic bonus
# for being far from o- grows without bound otherwise.
NON_GRASPABLE_DISTANCE_CAP = 0.1


@dataclass
class RewardWeights:
    w_d_plus: float = 0.3
    w_d_minus: float = 0.06
    w_v: float = 1.0
    w_omega: float = 1.0
    w_m: float = 10.0
    w_c_plus: float = 1.0
    w_c_minus: float = 1.0
    w_f_plus: float = 0.3
    w_f_minus: float = 0.15
    w_h: float = 0.001
    w_o_reg: float = 0.0
    w_anatomy: float = 0.2
    lambda_cap: float = 5.0
    # optional per-link overrides for the distance weights
    w_d_plus_per_link: np.ndarray | None = None
    w_d_minus_per_link: np.ndarray | None = None

    def d_plus(self, num_links: int) -> np.ndarray:
        if self.w_d_plus_per_link is not None:
            return np.asarray(self.w_d_plus_per_link, dtype=float)
        return np.full(num_links, self.w_d_plus)

    def d_minus(self, num_links: int) -> np.ndarray:
        if self.w_d_minus_per_link is not None:
            return np.asarray(self.w_d_minus_per_link, dtype=float)
        return np.full(num_links, self.w_d_minus)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name.endswith("per_link"):
                continue
            out[f.name] = getattr(self, f.name)
        return out


PHASE1 = RewardWeights()
PHASE2 = RewardWeights(w_v=0.01, w_omega=0.01, w_f_plus=0.5, w_f_minus=0.25,
                       w_o_reg=0.1, w_anatomy=0.1)


def phase_weights(phase: int, overrides: dict | None = None) -> RewardWeights:
    if phase not in (1, 2):
        raise ValueError("phase must be 1 or 2")
    base = PHASE1 if phase == 1 else PHASE2
    if not overrides:
        return base
    data = base.to_dict()
    for key, value in overrides.items():
        if key not in data:
            raise KeyError(f"unknown reward weight {key!r}")
        data[key] = value
    return RewardWeights(**data)


@dataclass
class RewardBreakdown:
    r_dis: float
    r_v: float
    r_omega: float
    r_m: float
    r_c: float
    r_f: float
    r_reg: float
    r_anatomy: float

    @property
    def r_goal(self) -> float:
        return self.r_dis + self.r_v + self.r_omega + self.r_m

    @property
    def r_grasp(self) -> float:
        return self.r_c + self.r_f + self.r_anatomy + self.r_reg

    @property
    def r_total(self) -> float:
        return self.r_goal + self.r_grasp

    def to_dict(self) -> dict:
        return {
            "r_dis": self.r_dis, "r_v": self.r_v, "r_omega": self.r_omega,
            "r_m": self.r_m, "r_c": self.r_c, "r_f": self.r_f,
            "r_reg": self.r_reg, "r_anatomy": self.r_anatomy,
            "r_goal": self.r_goal, "r_grasp": self.r_grasp, "r_total": self.r_total,
        }


def _link_distances(state, asset, labels, morph, fk=None):
    if fk is None:
        fk = forward_kinematics(morph, state.wrist, state.q)
    rot = quat_to_mat(state.object_quat)
    local = (fk.positions - state.object_pos) @ rot
    plus = asset.cloud.points[labels == GRASPABLE]
    vec_p, _ = nearest_vectors(local, plus)
    d_plus = np.linalg.norm(vec_p, axis=1)
    minus = asset.cloud.points[labels == NON_GRASPABLE]
    d_minus = None
    if len(minus):
        vec_m, _ = nearest_vectors(local, minus)
        d_minus = np.linalg.norm(vec_m, axis=1)
    return d_plus, d_minus


def distance_reward(state, asset, T, morph, weights: RewardWeights, fk=None) -> float:
    """Approach shaping: penalize squared distance of every link to the
    nearest graspable point; reward (bounded) distance to the non-graspable
    set when one exists."""
    labels = T.labels if T.labels is not None else asset.cloud.labels
    d_plus, d_minus = _link_distances(state, asset, labels, morph, fk)
    L = len(morph.links)
    total = -float(weights.d_plus(L) @ d_plus**2)
    if d_minus is not None:
        capped = np.minimum(d_minus, NON_GRASPABLE_DISTANCE_CAP)
        total += float(weights.d_minus(L) @ capped**2)
    return total


def alignment_rewards(state, T, morph, weights: RewardWeights, fk=None):
    """(r_v, r_omega, r_m): squared-error penalties on heading, twist and
    midpoint relative to the objectives."""
    if fk is None:
        fk = forward_kinematics(morph, state.wrist, state.q)
    v, omega = heading_and_twist(state.wrist, T.canonical_y)
    m = midpoint(fk.positions, morph)
    r_v = -weights.w_v * float(np.sum((v - T.v_bar) ** 2))
    r_omega = -weights.w_omega * float(wrap_angle(omega - T.omega_bar) ** 2)
    r_m = -weights.w_m * float(np.sum((m - T.m_bar) ** 2))
    return r_v, r_omega, r_m


def contact_force_reward(state, object_mass: float, weights: RewardWeights):
    """(r_c, r_f): contact-count reward and weight-capped force reward.

    Forces on graspable links count up to lambda_cap times the object's
    weight in newtons, so squeezing harder than needed stops paying.
    """
    if object_mass <= 0:
        raise ValueError("object mass must be positive")
    c_plus = state.contacts_plus.astype(float)
    c_minus = state.contacts_minus.astype(float)
    r_c = weights.w_c_plus * float(c_plus @ c_plus) - weights.w_c_minus * float(c_minus @ c_minus)
    cap = weights.lambda_cap * object_mass * GRAVITY
    r_f = weights.w_f_plus * float(c_plus @ np.minimum(state.forces_plus, cap)) - (
        weights.w_f_minus * float(c_minus @ np.minimum(state.forces_minus, cap))
    )
    return r_c, r_f


def regularization_anatomy_reward(state, morph: HandMorphology, weights: RewardWeights):
    """(r_reg, r_anatomy): velocity regularization and quadratic joint-limit
    violation penalty (locked padding axes cannot violate by construction)."""
    r_reg = -weights.w_h * float(state.wrist_vel @ state.wrist_vel) - (
        weights.w_o_reg * float(state.object_vel @ state.object_vel)
    )
    over = np.maximum(0.0, state.q - morph.limits_high)
    under = np.maximum(0.0, morph.limits_low - state.q)
    r_anatomy = -weights.w_anatomy * float(over @ over + under @ under)
    return r_reg, r_anatomy


def total_reward(state, T, body, morph: HandMorphology, phase_or_weights, fk=None) -> RewardBreakdown:
    """All terms under one phase's weights; the breakdown identities
    (goal/grasp split and their sum) hold exactly by construction."""
    if isinstance(phase_or_weights, RewardWeights):
        weights = phase_or_weights
    else:
        weights = phase_weights(int(phase_or_weights))
    r_dis = distance_reward(state, body.asset, T, morph, weights, fk)
    r_v, r_omega, r_m = alignment_rewards(state, T, morph, weights, fk)
    r_c, r_f = contact_force_reward(state, body.mass, weights)
    r_reg, r_anatomy = regularization_anatomy_reward(state, morph, weights)
    return RewardBreakdown(r_dis, r_v, r_omega, r_m, r_c, r_f, r_reg, r_anatomy)
