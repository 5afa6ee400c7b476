"""Trajectory records and their JSON-Lines serialization.

A trajectory file is one header line (schema version, config hash, object
id, objectives, morphology name, lift boundary) followed by one line per
control step. Files are written atomically (temp + rename) and are byte
reproducible for identical inputs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

SCHEMA_VERSION = 1


class SchemaMismatch(Exception):
    pass


def _listify(x):
    if isinstance(x, np.ndarray):
        return [float(v) for v in x.ravel()]
    return x


@dataclass
class StepRecord:
    t: float
    q: np.ndarray
    wrist_pos: np.ndarray
    wrist_quat: np.ndarray
    object_pos: np.ndarray
    object_quat: np.ndarray
    c_plus: np.ndarray
    c_minus: np.ndarray
    f_plus: np.ndarray
    f_minus: np.ndarray
    action: np.ndarray
    reward: dict

    def to_dict(self) -> dict:
        return {
            "t": float(self.t),
            "q": _listify(self.q),
            "wrist_pos": _listify(self.wrist_pos),
            "wrist_quat": _listify(self.wrist_quat),
            "object_pos": _listify(self.object_pos),
            "object_quat": _listify(self.object_quat),
            "c_plus": [int(v) for v in self.c_plus],
            "c_minus": [int(v) for v in self.c_minus],
            "f_plus": _listify(self.f_plus),
            "f_minus": _listify(self.f_minus),
            "action": _listify(self.action),
            "reward": {k: float(v) for k, v in self.reward.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StepRecord":
        return cls(
            t=d["t"],
            q=np.array(d["q"]),
            wrist_pos=np.array(d["wrist_pos"]),
            wrist_quat=np.array(d["wrist_quat"]),
            object_pos=np.array(d["object_pos"]),
            object_quat=np.array(d["object_quat"]),
            c_plus=np.array(d["c_plus"], dtype=np.int64),
            c_minus=np.array(d["c_minus"], dtype=np.int64),
            f_plus=np.array(d["f_plus"]),
            f_minus=np.array(d["f_minus"]),
            action=np.array(d["action"]),
            reward=d["reward"],
        )


@dataclass
class Trajectory:
    config_hash: str
    object_id: str
    morphology: str
    objective: dict  # serialized ObjectiveSet
    lift_start: int  # step index where the scripted lift begins
    dt: float
    substeps: int
    steps: list = field(default_factory=list)
    schema: int = SCHEMA_VERSION

    def header(self) -> dict:
        return {
            "schema": self.schema,
            "kind": "trajectory",
            "config_hash": self.config_hash,
            "object_id": self.object_id,
            "morphology": self.morphology,
            "objective": self.objective,
            "lift_start": self.lift_start,
            "dt": self.dt,
            "substeps": self.substeps,
        }


def atomic_write_text(path, text: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_trajectory(traj: Trajectory, path) -> None:
    lines = [json.dumps(traj.header(), sort_keys=True)]
    lines.extend(json.dumps(s.to_dict(), sort_keys=True) for s in traj.steps)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_trajectory(path) -> Trajectory:
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("kind") != "trajectory":
            raise SchemaMismatch(f"{path}: not a trajectory file")
        if header.get("schema") != SCHEMA_VERSION:
            raise SchemaMismatch(
                f"{path}: schema {header.get('schema')} != {SCHEMA_VERSION}"
            )
        steps = [StepRecord.from_dict(json.loads(line)) for line in fh if line.strip()]
    return Trajectory(
        config_hash=header["config_hash"],
        object_id=header["object_id"],
        morphology=header["morphology"],
        objective=header["objective"],
        lift_start=header["lift_start"],
        dt=header["dt"],
        substeps=header["substeps"],
        steps=steps,
        schema=header["schema"],
    )
