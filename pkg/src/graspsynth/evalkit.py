"""Evaluation metrics over recorded trajectories and their aggregation.

A grasp succeeds when the object rises more than 10 cm above its starting
height at some point and is still at least 10 cm up when the sequence
ends. Objective errors are measured at the last step before the scripted
lift begins, since the lift intentionally moves the hand away from the
targets.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .geometry import GRASPABLE
from .hand import (
    HandMorphology,
    WristPose,
    forward_kinematics,
    heading_and_twist,
    midpoint,
)
from .objectives import objective_from_dict, resolve_defaults
from .rotations import wrap_angle
from .trajectory import Trajectory

SUCCESS_HEIGHT = 0.10


class EmptyGroup(Exception):
    pass


class MissingPartition(Exception):
    pass


@dataclass
class Metrics:
    object_id: str
    success: bool
    mid_error_cm: float
    head_error_rad: float
    rot_error_rad: float
    contact_ratio: float | None  # absent without a non-graspable partition

    def to_dict(self) -> dict:
        return {
            "object_id": self.object_id,
            "success": bool(self.success),
            "mid_error_cm": float(self.mid_error_cm),
            "head_error_rad": float(self.head_error_rad),
            "rot_error_rad": float(self.rot_error_rad),
            "contact_ratio": None if self.contact_ratio is None else float(self.contact_ratio),
        }


def compute_metrics(traj: Trajectory, T, asset, morph: HandMorphology) -> Metrics:
    """All five protocol metrics for one recorded rollout."""
    if not traj.steps:
        raise ValueError("empty trajectory")
    if not T.resolved:
        T = resolve_defaults(T, asset)
    # height gain relative to the first recorded pose
    z0 = traj.steps[0].object_pos[2]
    heights = np.array([s.object_pos[2] for s in traj.steps]) - z0
    peak = float(heights.max())
    final = float(heights[-1])
    success = peak > SUCCESS_HEIGHT and final >= SUCCESS_HEIGHT

    pre_lift_idx = min(max(traj.lift_start - 1, 0), len(traj.steps) - 1)
    ref = traj.steps[pre_lift_idx]
    wrist = WristPose(ref.wrist_pos, ref.wrist_quat)
    fk = forward_kinematics(morph, wrist, ref.q)
    m = midpoint(fk.positions, morph)
    v, omega = heading_and_twist(wrist, T.canonical_y)

    mid_error_cm = float(np.linalg.norm(m - T.m_bar) * 100.0)
    head_error = float(np.arccos(np.clip(v @ T.v_bar, -1.0, 1.0)))
    rot_error = float(abs(wrap_angle(omega - T.omega_bar)))

    contact_ratio = None
    labels = T.labels
    if labels is not None and np.any(labels != GRASPABLE):
        plus = int(np.sum(ref.c_plus))
        touching = int(np.sum((ref.c_plus + ref.c_minus) > 0))
        contact_ratio = (plus / touching) if touching > 0 else None
    return Metrics(traj.object_id, success, mid_error_cm, head_error, rot_error, contact_ratio)


def aggregate(records: list[Metrics], group_key=lambda m: m.object_id) -> list[dict]:
    """Per-group means plus an overall row; errors average over every
    episode, successes and failures alike."""
    if not records:
        raise EmptyGroup("no metrics to aggregate")
    groups: dict = {}
    for rec in records:
        groups.setdefault(group_key(rec), []).append(rec)

    def row(name, recs):
        ratios = [r.contact_ratio for r in recs if r.contact_ratio is not None]
        return {
            "group": name,
            "n": len(recs),
            "success_rate_pct": 100.0 * float(np.mean([r.success for r in recs])),
            "mid_err_cm": float(np.mean([r.mid_error_cm for r in recs])),
            "head_err_rad": float(np.mean([r.head_error_rad for r in recs])),
            "rot_err_rad": float(np.mean([r.rot_error_rad for r in recs])),
            "contact_ratio": float(np.mean(ratios)) if ratios else None,
        }

    rows = [row(name, recs) for name, recs in sorted(groups.items())]
    if len(rows) > 1:
        rows.append(row("overall", records))
    return rows


CSV_COLUMNS = ["group", "n", "success_rate_pct", "mid_err_cm", "head_err_rad", "rot_err_rad", "contact_ratio"]


def report_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        out = dict(r)
        out["contact_ratio"] = "" if r["contact_ratio"] is None else repr(float(r["contact_ratio"]))
        for k in ("success_rate_pct", "mid_err_cm", "head_err_rad", "rot_err_rad"):
            out[k] = repr(float(r[k]))
        writer.writerow(out)
    return buf.getvalue()


def report_json(rows: list[dict], schema_version: int, config_hash: str) -> str:
    return json.dumps(
        {"schema": schema_version, "config_hash": config_hash, "rows": rows}, sort_keys=True
    )


def objective_from_header(traj: Trajectory, n_points: int):
    return objective_from_dict(traj.objective, n_points=n_points)
