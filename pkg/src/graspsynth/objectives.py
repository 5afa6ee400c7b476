"""Motion objectives: target heading direction, wrist twist, grasp midpoint
and the graspable partition, plus defaults and the training-time sampler.

Only the heading direction is mandatory. Missing fields resolve to: full
cloud graspable, midpoint at the cloud mean, zero twist. The canonical y
direction (twist reference) is the minimal-width direction of the
graspable points projected along the heading.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .geometry import GRASPABLE, ObjectAsset, projected_min_width_direction
from .hand import rotate_about
from .rotations import wrap_positive

NARROW_LIMIT = 0.12  # max graspable extent along the hand-frame y axis, m
DEFAULT_MAX_RETRIES = 50


class UnsampleableObject(Exception):
    """No admissible objective found; the object is too large to span."""


@dataclass
class ObjectiveSet:
    v_bar: np.ndarray  # (3,) unit, mandatory
    omega_bar: float | None = None  # [0, 2*pi)
    m_bar: np.ndarray | None = None  # (3,)
    labels: np.ndarray | None = None  # per-point labels on the object's cloud
    canonical_y: np.ndarray | None = None  # derived, orthogonal to v_bar

    def __post_init__(self):
        self.v_bar = np.asarray(self.v_bar, dtype=float)
        n = np.linalg.norm(self.v_bar)
        if not np.isfinite(n) or n < 1e-9:
            raise ValueError("v_bar must be a nonzero finite vector")
        self.v_bar = self.v_bar / n
        if self.omega_bar is not None:
            self.omega_bar = float(wrap_positive(self.omega_bar))
        if self.m_bar is not None:
            self.m_bar = np.asarray(self.m_bar, dtype=float)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)

    @property
    def resolved(self) -> bool:
        return (
            self.omega_bar is not None
            and self.m_bar is not None
            and self.labels is not None
            and self.canonical_y is not None
        )


def resolve_defaults(partial: ObjectiveSet, asset: ObjectAsset) -> ObjectiveSet:
    """Fill unspecified fields from the object and derive canonical_y."""
    labels = partial.labels
    if labels is None:
        labels = np.full(len(asset.cloud.points), GRASPABLE, dtype=np.int64)
    if len(labels) != len(asset.cloud.points):
        raise ValueError("partition length does not match the object cloud")
    grasp_pts = asset.cloud.points[labels == GRASPABLE]
    if len(grasp_pts) == 0:
        raise ValueError("graspable partition is empty")
    m_bar = partial.m_bar
    if m_bar is None:
        m_bar = asset.cloud.points.mean(axis=0)
    omega_bar = partial.omega_bar if partial.omega_bar is not None else 0.0
    canonical_y = projected_min_width_direction(grasp_pts, partial.v_bar)
    return replace(
        partial, omega_bar=omega_bar, m_bar=m_bar, labels=labels, canonical_y=canonical_y
    )


def hand_frame_y(v_bar, omega_bar: float, canonical_y) -> np.ndarray:
    """World direction of the hand's local y axis at the given twist."""
    return rotate_about(canonical_y, np.asarray(v_bar, dtype=float), omega_bar)


def sample_unit_vector(rng: np.random.Generator) -> np.ndarray:
    """Uniform direction on the unit sphere."""
    while True:
        v = rng.normal(size=3)
        n = np.linalg.norm(v)
        if n > 1e-12:
            return v / n


def extent_along(points: np.ndarray, direction: np.ndarray) -> float:
    proj = points @ np.asarray(direction, dtype=float)
    return float(proj.max() - proj.min())


def sample_objectives(
    asset: ObjectAsset, seed: int, max_retries: int = DEFAULT_MAX_RETRIES
) -> ObjectiveSet:
    """Draw a random admissible objective for the object.

    Heading uniform on the sphere, twist uniform on [0, 2*pi), midpoint a
    random graspable surface point; accepted only when the graspable points
    span less than NARROW_LIMIT along the resulting hand-frame y axis.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    labels = asset.cloud.labels
    grasp_idx = np.flatnonzero(labels == GRASPABLE)
    if len(grasp_idx) == 0:
        raise ValueError("object has no graspable points")
    grasp_pts = asset.cloud.points[grasp_idx]
    for _ in range(max_retries):
        v_bar = sample_unit_vector(rng)
        omega_bar = rng.uniform(0.0, 2.0 * np.pi)
        m_idx = int(rng.choice(grasp_idx))
        candidate = ObjectiveSet(
            v_bar=v_bar,
            omega_bar=omega_bar,
            m_bar=asset.cloud.points[m_idx],
            labels=labels.copy(),
        )
        try:
            resolved = resolve_defaults(candidate, asset)
        except Exception:
            continue
        y_axis = hand_frame_y(resolved.v_bar, resolved.omega_bar, resolved.canonical_y)
        if extent_along(grasp_pts, y_axis) < NARROW_LIMIT:
            return resolved
    raise UnsampleableObject(
        f"no admissible objective for {asset.object_id!r} in {max_retries} tries"
    )


# ---------------------------------------------------------------------------
# serialization


def objective_to_dict(obj: ObjectiveSet) -> dict:
    graspable = None
    if obj.labels is not None:
        if np.all(obj.labels == GRASPABLE):
            graspable = None  # canonical form: whole cloud graspable
        else:
            graspable = np.flatnonzero(obj.labels == GRASPABLE).tolist()
    return {
        "v_bar": [float(x) for x in obj.v_bar],
        "omega_bar": None if obj.omega_bar is None else float(obj.omega_bar),
        "m_bar": None if obj.m_bar is None else [float(x) for x in obj.m_bar],
        "graspable_indices": graspable,
    }


def objective_from_dict(data: dict, n_points: int | None = None) -> ObjectiveSet:
    labels = None
    if data.get("graspable_indices") is not None:
        if n_points is None:
            raise ValueError("n_points required to expand graspable_indices")
        labels = np.zeros(n_points, dtype=np.int64)
        labels[np.asarray(data["graspable_indices"], dtype=int)] = GRASPABLE
    elif n_points is not None:
        labels = np.full(n_points, GRASPABLE, dtype=np.int64)
    return ObjectiveSet(
        v_bar=np.array(data["v_bar"], dtype=float),
        omega_bar=data.get("omega_bar"),
        m_bar=None if data.get("m_bar") is None else np.array(data["m_bar"], dtype=float),
        labels=labels,
    )


def objective_to_json(obj: ObjectiveSet) -> str:
    return json.dumps(objective_to_dict(obj))


def objective_from_json(text: str, n_points: int | None = None) -> ObjectiveSet:
    return objective_from_dict(json.loads(text), n_points)
