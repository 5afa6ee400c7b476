"""Policy observation: a fixed-layout feature vector assembled from the
simulation state and the motion objectives, plus a running normalizer.

Layout for a hand with L links (total 16L + 19):
    q (3L, per-link joint angles zero-padded to 3 axes), d (3L, tracking
    error, same padding), u_h (6), u_o (6), c+ (L), c- (L), f+ (L), f- (L),
    v_tilde (3), m_tilde (3), omega_tilde (1), l+ (3L), l- (3L).
The graspable/non-graspable distance rows point from each link to its
nearest labeled surface point; l- is zero when the non-graspable set is
empty.
"""

from __future__ import annotations

import numpy as np

from .geometry import GRASPABLE, NON_GRASPABLE, ObjectAsset, nearest_vectors
from .hand import (
    DimensionMismatch,
    HandMorphology,
    forward_kinematics,
    heading_and_twist,
    midpoint,
)
from .rotations import quat_rotate, quat_to_mat, wrap_angle


def feature_layout(num_links: int) -> list[tuple[str, int, int]]:
    """(name, offset, size) for every segment, in extraction order."""
    L = num_links
    sizes = [
        ("q", 3 * L),
        ("d", 3 * L),
        ("u_h", 6),
        ("u_o", 6),
        ("c_plus", L),
        ("c_minus", L),
        ("f_plus", L),
        ("f_minus", L),
        ("v_tilde", 3),
        ("m_tilde", 3),
        ("omega_tilde", 1),
        ("l_plus", 3 * L),
        ("l_minus", 3 * L),
    ]
    out = []
    offset = 0
    for name, size in sizes:
        out.append((name, offset, size))
        offset += size
    return out


def feature_dim(num_links: int) -> int:
    return 16 * num_links + 19


def extract(
    state,
    T,
    asset: ObjectAsset,
    morph: HandMorphology,
    fk=None,
    distance_features: bool = True,
) -> np.ndarray:
    """Assemble the observation vector for one state.

    The optional fk argument reuses already-computed link positions; the
    result is identical to recomputing. distance_features=False zeroes the
    l+/l- segments without changing the layout (ablation switch).
    """
    if fk is None:
        fk = forward_kinematics(morph, state.wrist, state.q)
    L = len(morph.links)
    positions = fk.positions
    v, omega = heading_and_twist(state.wrist, T.canonical_y)
    m = midpoint(positions, morph)

    labels = T.labels if T.labels is not None else asset.cloud.labels
    out = np.zeros(feature_dim(L))
    o = 0
    out[o : o + 3 * L] = morph.pad_per_link(state.q).ravel(); o += 3 * L
    out[o : o + 3 * L] = morph.pad_per_link(state.pd_error).ravel(); o += 3 * L
    out[o : o + 6] = state.wrist_vel; o += 6
    out[o : o + 6] = state.object_vel; o += 6
    out[o : o + L] = state.contacts_plus; o += L
    out[o : o + L] = state.contacts_minus; o += L
    out[o : o + L] = state.forces_plus; o += L
    out[o : o + L] = state.forces_minus; o += L
    out[o : o + 3] = T.v_bar - v; o += 3
    out[o : o + 3] = T.m_bar - m; o += 3
    out[o] = wrap_angle(T.omega_bar - omega); o += 1

    if distance_features:
        # nearest points queried in the object frame (distances invariant),
        # reported in the wrist frame: the same relative hand/object
        # geometry then produces the same rows regardless of the sampled
        # approach heading, which generalizes across objectives far better
        # than world coordinates at small training scale
        rot = quat_to_mat(state.object_quat)
        local = (positions - state.object_pos) @ rot
        plus = asset.cloud.points[labels == GRASPABLE]
        if len(plus) == 0:
            raise ValueError("graspable partition is empty")
        wrist_rot = quat_to_mat(state.wrist.orientation)
        to_wrist = rot.T @ wrist_rot  # object-local rows -> world -> wrist
        vec_p, _ = nearest_vectors(local, plus)
        out[o : o + 3 * L] = (vec_p @ to_wrist).ravel()
        minus = asset.cloud.points[labels == NON_GRASPABLE]
        if len(minus):
            vec_m, _ = nearest_vectors(local, minus)
            out[o + 3 * L : o + 6 * L] = (vec_m @ to_wrist).ravel()
    return out


class RunningNormalizer:
    """Streaming mean/variance with parallel batch merging (Chan's update).

    normalize() maps x to (x - mean) / max(std, 1e-6), clipped to [-10, 10].
    Freeze before evaluation so rollouts see a fixed transform.
    """

    def __init__(self, dim: int):
        self.dim = dim
        self.count = 0.0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)
        self.frozen = False

    def update(self, batch: np.ndarray) -> None:
        batch = np.asarray(batch, dtype=float)
        if batch.ndim == 1:
            batch = batch[None, :]
        if batch.shape[1] != self.dim:
            raise DimensionMismatch(f"normalizer dim {self.dim}, batch {batch.shape}")
        if self.frozen:
            return
        n_b = float(len(batch))
        mean_b = batch.mean(axis=0)
        m2_b = ((batch - mean_b) ** 2).sum(axis=0)
        if self.count == 0.0:
            self.count, self.mean, self.m2 = n_b, mean_b, m2_b
            return
        delta = mean_b - self.mean
        total = self.count + n_b
        self.mean = self.mean + delta * (n_b / total)
        self.m2 = self.m2 + m2_b + delta**2 * (self.count * n_b / total)
        self.count = total

    @property
    def std(self) -> np.ndarray:
        if self.count <= 0:
            return np.ones(self.dim)
        return np.sqrt(self.m2 / self.count)

    def normalize(self, x: np.ndarray) -> np.ndarray:
        if self.count <= 0:
            return np.clip(x, -10.0, 10.0)
        return np.clip((x - self.mean) / np.maximum(self.std, 1e-6), -10.0, 10.0)

    def freeze(self) -> None:
        self.frozen = True

    def state_dict(self) -> dict:
        return {
            "count": self.count,
            "mean": self.mean.copy(),
            "m2": self.m2.copy(),
            "frozen": int(self.frozen),
        }

    @classmethod
    def from_state(cls, state: dict) -> "RunningNormalizer":
        out = cls(len(state["mean"]))
        out.count = float(state["count"])
        out.mean = np.asarray(state["mean"], dtype=float).copy()
        out.m2 = np.asarray(state["m2"], dtype=float).copy()
        out.frozen = bool(state["frozen"])
        return out
