"""Rollout environment: reset/step protocol around the simulator, reward
and feature extraction, plus the deterministic evaluation rollout with the
scripted lift phase."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from . import physics as phys
from .config import ActionConfig, EvalConfig
from .geometry import ObjectAsset, inertia_from_cloud
from .hand import (
    HandMorphology,
    WristPose,
    forward_kinematics,
    orientation_from_heading_twist,
)
from .perception import extract, feature_dim
from .physics import NumericalBlowup, ObjectBody, PDCommand, PhysicsConfig, SimState
from .rewards import RewardBreakdown, RewardWeights, phase_weights, total_reward
from .trajectory import StepRecord, Trajectory

BLOWUP_PENALTY = -10.0


class InitialPenetration(Exception):
    """The hand spawned intersecting the object; resample the objective."""


class GraspEnv:
    """One hand, one object, one resolved objective set.

    phase 1 pins the object in place (curriculum stage); phase 2 frees it
    under gravity with a support plane at its resting height.
    """

    def __init__(
        self,
        asset: ObjectAsset,
        morph: HandMorphology,
        T,
        phase: int,
        physics_cfg: PhysicsConfig | None = None,
        weights: RewardWeights | None = None,
        action_cfg: ActionConfig | None = None,
        episode_len: int = 150,
        guidance: bool = True,
        distance_features: bool = True,
        mass: float = 0.1,
    ):
        if not T.resolved:
            raise ValueError("objective set must be resolved before use")
        self.asset = asset
        self.morph = morph
        self.T = T
        self.phase = phase
        self.cfg = physics_cfg or PhysicsConfig()
        self.weights = weights or phase_weights(phase)
        self.action_cfg = action_cfg or ActionConfig()
        self.episode_len = episode_len
        self.guidance = guidance
        self.distance_features = distance_features
        inertia = inertia_from_cloud(asset.cloud, mass)
        plane_z = float(asset.cloud.points[:, 2].min())
        self.body = ObjectBody(
            asset,
            mass,
            inertia,
            static_flag=(phase == 1),
            labels=T.labels,
            plane_z=plane_z,
        )
        self.obs_dim = feature_dim(len(morph.links))
        self.act_dim = morph.total_dof + 6
        self.state: SimState | None = None
        self.steps = 0
        self.blown_up = False

    # ------------------------------------------------------------------
    def reset(self) -> tuple[SimState, np.ndarray]:
        """Wrist 0.3 m behind the target midpoint along the heading, aligned
        to the target frame, fingers at the open neutral pose."""
        quat = orientation_from_heading_twist(self.T.v_bar, self.T.omega_bar, self.T.canonical_y)
        wrist = WristPose(self.T.m_bar - 0.3 * self.T.v_bar, quat)
        state = SimState.initial(self.morph, wrist, self.morph.open_pose)
        contacts = phys.resolve_contacts(state, self.morph, self.body, self.cfg)
        if contacts.contact_mask.any():
            raise InitialPenetration("hand spawned inside the object")
        self.state = state
        self.steps = 0
        self.blown_up = False
        return state, self._observe(state)

    def _observe(self, state: SimState, fk=None) -> np.ndarray:
        return extract(
            state, self.T, self.asset, self.morph, fk=fk,
            distance_features=self.distance_features,
        )

    def _command(self, state: SimState, action: np.ndarray, lift_offset: float = 0.0) -> PDCommand:
        a = self.action_cfg
        dof = self.morph.total_dof
        finger_targets = state.q + action[:dof] * a.finger_scale
        wrist = np.concatenate(
            [
                action[dof : dof + 3] * a.wrist_translation_scale,
                action[dof + 3 :] * a.wrist_rotation_scale,
            ]
        )
        cmd = PDCommand(finger_targets, wrist)
        if self.guidance:
            T = self.T
            if lift_offset != 0.0:
                T = replace(self.T, m_bar=self.T.m_bar + np.array([0.0, 0.0, lift_offset]))
            cmd = phys.apply_wrist_guidance(cmd, state, T, self.morph)
        return cmd

    def step(self, action: np.ndarray, lift_offset: float = 0.0):
        """Returns (state, observation, breakdown, reward, done)."""
        if self.state is None:
            raise RuntimeError("call reset() first")
        action = np.asarray(action, dtype=float)
        if action.shape != (self.act_dim,):
            raise ValueError(f"action must have shape ({self.act_dim},)")
        cmd = self._command(self.state, action, lift_offset)
        try:
            new_state = phys.step(
                self.state, cmd, self.body, self.cfg.dt, self.cfg.substeps, self.morph, self.cfg
            )
        except NumericalBlowup:
            self.steps += 1
            self.blown_up = True
            breakdown = total_reward(self.state, self.T, self.body, self.morph, self.weights)
            return self.state, self._observe(self.state), breakdown, breakdown.r_total + BLOWUP_PENALTY, True
        self.state = new_state
        self.steps += 1
        fk = forward_kinematics(self.morph, new_state.wrist, new_state.q)
        breakdown = total_reward(new_state, self.T, self.body, self.morph, self.weights, fk=fk)
        obs = self._observe(new_state, fk=fk)
        done = self.steps >= self.episode_len
        return new_state, obs, breakdown, breakdown.r_total, done


def rollout_eval(
    policy,
    normalizer,
    asset: ObjectAsset,
    T,
    morph: HandMorphology,
    physics_cfg: PhysicsConfig,
    action_cfg: ActionConfig | None = None,
    eval_cfg: EvalConfig | None = None,
    guidance: bool = True,
    distance_features: bool = True,
    mass: float = 0.1,
    config_hash: str = "",
    weights: RewardWeights | None = None,
) -> Trajectory:
    """Deterministic evaluation: mean-action grasping for grasp_steps, then
    a scripted lift that raises the guidance midpoint target linearly while
    the policy keeps driving the fingers (wrist actions zeroed)."""
    ev = eval_cfg or EvalConfig()
    env = GraspEnv(
        asset, morph, T, phase=2, physics_cfg=physics_cfg,
        weights=weights or phase_weights(2), action_cfg=action_cfg,
        episode_len=ev.grasp_steps + ev.lift_steps + 1,
        guidance=guidance, distance_features=distance_features, mass=mass,
    )
    state, obs = env.reset()
    traj = Trajectory(
        config_hash=config_hash,
        object_id=asset.object_id,
        morphology=morph.name,
        objective=_objective_dict(T),
        lift_start=ev.grasp_steps,
        dt=physics_cfg.dt,
        substeps=physics_cfg.substeps,
    )
    dof = morph.total_dof
    for k in range(ev.grasp_steps + ev.lift_steps):
        features = normalizer.normalize(obs) if normalizer is not None else obs
        action, _, _ = policy.act(features, rng=None)
        lift = 0.0
        if k >= ev.grasp_steps:
            action = action.copy()
            action[dof:] = 0.0
            lift = ev.lift_height * min(1.0, (k - ev.grasp_steps + 1) / ev.lift_steps)
        state, obs, breakdown, _, done = env.step(action, lift_offset=lift)
        traj.steps.append(
            StepRecord(
                t=state.time,
                q=state.q,
                wrist_pos=state.wrist.position,
                wrist_quat=state.wrist.orientation,
                object_pos=state.object_pos,
                object_quat=state.object_quat,
                c_plus=state.contacts_plus,
                c_minus=state.contacts_minus,
                f_plus=state.forces_plus,
                f_minus=state.forces_minus,
                action=action,
                reward=breakdown.to_dict(),
            )
        )
        if done and k < ev.grasp_steps + ev.lift_steps - 1:
            break
    return traj


def _objective_dict(T) -> dict:
    from .objectives import objective_to_dict

    return objective_to_dict(T)
