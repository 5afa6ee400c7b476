"""Triangle meshes, surface point clouds and the asset preprocessing rules.

Everything works on float64 numpy arrays in meters. Structures are
immutable after construction so rollout workers can share them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

GRASPABLE = 1
NON_GRASPABLE = 0

# Labels below this face area are dropped at load time (degenerate faces).
_MIN_FACE_AREA = 1e-16


class EmptyMesh(Exception):
    pass


class EmptyPartition(Exception):
    pass


class DegenerateExtent(Exception):
    pass


class DegenerateProjection(Exception):
    pass


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray  # (V, 3)
    faces: np.ndarray  # (F, 3) int

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=float))
        object.__setattr__(self, "faces", np.asarray(self.faces, dtype=np.int64))
        if self.faces.size and self.faces.max() >= len(self.vertices):
            raise ValueError("face index out of range")


@dataclass
class PointCloud:
    points: np.ndarray  # (N, 3)
    labels: np.ndarray  # (N,) in {GRASPABLE, NON_GRASPABLE}
    normals: np.ndarray | None = None  # (N, 3) outward, from source faces
    face_index: np.ndarray | None = None  # (N,) source face per point

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape[0] != self.points.shape[0]:
            raise ValueError("labels/points length mismatch")


@dataclass(frozen=True)
class BBox:
    min_corner: np.ndarray
    max_corner: np.ndarray


@dataclass
class ObjectAsset:
    """A rigid object: mesh, sampled surface cloud and mass metadata."""

    object_id: str
    mesh: TriMesh
    cloud: PointCloud
    mass: float = 0.1
    scale_info: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# mesh loading / saving


def load_obj(path) -> TriMesh:
    """Parse wavefront-style ASCII: `v` and `f` records, fan triangulation.

    Other record types are ignored. Face entries may carry `/vt/vn` parts.
    """
    verts = []
    faces = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v" and len(parts) >= 4:
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f" and len(parts) >= 4:
                idx = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts:
        raise EmptyMesh(f"no vertices in {path}")
    mesh = TriMesh(np.array(verts), np.array(faces, dtype=np.int64).reshape(-1, 3))
    return drop_degenerate_faces(mesh)


def save_obj(mesh: TriMesh, path) -> None:
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
    for f in mesh.faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def drop_degenerate_faces(mesh: TriMesh) -> TriMesh:
    if len(mesh.faces) == 0:
        return mesh
    keep = face_areas(mesh) > _MIN_FACE_AREA
    return TriMesh(mesh.vertices, mesh.faces[keep])


def face_areas(mesh: TriMesh) -> np.ndarray:
    v = mesh.vertices
    f = mesh.faces
    cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    return 0.5 * np.linalg.norm(cross, axis=1)


def face_normals(mesh: TriMesh) -> np.ndarray:
    v = mesh.vertices
    f = mesh.faces
    cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    norm = np.linalg.norm(cross, axis=1, keepdims=True)
    return cross / np.maximum(norm, 1e-300)


def is_closed(mesh: TriMesh) -> bool:
    """True when every directed edge has exactly one opposite twin."""
    f = mesh.faces
    if len(f) == 0:
        return False
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    fwd = set(map(tuple, edges.tolist()))
    if len(fwd) != len(edges):
        return False
    return all((b, a) in fwd for a, b in fwd)


def mesh_volume(mesh: TriMesh) -> tuple[float, bool]:
    """Enclosed volume in m^3 and whether the convex-hull fallback was used.

    Non-closed meshes have no well-defined enclosed volume; for those the
    convex hull volume of the vertices is reported instead.
    """
    if is_closed(mesh):
        v = mesh.vertices
        f = mesh.faces
        vol = np.einsum("ij,ij->i", v[f[:, 0]], np.cross(v[f[:, 1]], v[f[:, 2]])).sum() / 6.0
        return abs(float(vol)), False
    try:
        hull = ConvexHull(mesh.vertices)
        return float(hull.volume), True
    except (QhullError, ValueError):
        return 0.0, True


# ---------------------------------------------------------------------------
# surface sampling


def sample_surface_points(mesh: TriMesh, n: int, seed: int) -> PointCloud:
    """Sample n points area-proportionally on the surface, deterministic in seed.

    All labels start graspable; per-point outward normals come from the
    source face of each sample.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    areas = face_areas(mesh) if len(mesh.faces) else np.zeros(0)
    valid = areas > _MIN_FACE_AREA
    if not valid.any():
        raise EmptyMesh("mesh has no non-degenerate faces")
    probs = np.where(valid, areas, 0.0)
    probs = probs / probs.sum()
    rng = np.random.Generator(np.random.PCG64(seed))
    face_idx = rng.choice(len(mesh.faces), size=n, p=probs)
    u = rng.random(n)
    v = rng.random(n)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    tri = mesh.faces[face_idx]
    p0 = mesh.vertices[tri[:, 0]]
    p1 = mesh.vertices[tri[:, 1]]
    p2 = mesh.vertices[tri[:, 2]]
    pts = p0 + u[:, None] * (p1 - p0) + v[:, None] * (p2 - p0)
    normals = face_normals(mesh)[face_idx]
    return PointCloud(pts, np.full(n, GRASPABLE, dtype=np.int64), normals, face_idx)


# ---------------------------------------------------------------------------
# nearest-neighbor queries

def nearest_index_bruteforce(query: np.ndarray, points: np.ndarray) -> int:
    """Lowest index among points at minimal squared distance to query."""
    d2 = np.einsum("ij,ij->i", points - query, points - query)
    return int(np.argmin(d2))


def nearest_point(query, cloud: PointCloud, label_filter: int = GRASPABLE):
    """Vector from query to the closest point with the given label, plus its
    index into the full cloud. Ties break to the lowest index."""
    query = np.asarray(query, dtype=float)
    mask = cloud.labels == label_filter
    if not mask.any():
        raise EmptyPartition(f"no points with label {label_filter}")
    sub = cloud.points[mask]
    local = nearest_index_bruteforce(query, sub)
    idx = int(np.flatnonzero(mask)[local])
    return cloud.points[idx] - query, idx


def nearest_vectors(queries: np.ndarray, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched nearest neighbor: (Q,3) queries vs (N,3) points.

    Returns (vec (Q,3) point-minus-query, idx (Q,)); first-index tie break.
    """
    # |q-p|^2 = |q|^2 - 2 q.p + |p|^2; the |q|^2 term does not move the argmin
    d2 = -2.0 * queries @ points.T + np.einsum("ij,ij->i", points, points)[None, :]
    idx = np.argmin(d2, axis=1)
    return points[idx] - queries, idx


class KDTreeIndex:
    """Spatial index with the same tie-break contract as the brute-force scan.

    A plain kd-tree query may land on any member of a distance tie, so the
    candidate set at the minimal distance is re-scanned for the lowest index.
    """

    def __init__(self, points: np.ndarray):
        self.points = np.asarray(points, dtype=float)
        self._tree = cKDTree(self.points)

    def query(self, q) -> int:
        q = np.asarray(q, dtype=float)
        d, _ = self._tree.query(q)
        cand = self._tree.query_ball_point(q, d * (1.0 + 1e-12) + 1e-300)
        cand = np.sort(np.asarray(cand, dtype=np.int64))
        sub = self.points[cand]
        d2 = np.einsum("ij,ij->i", sub - q, sub - q)
        return int(cand[np.argmin(d2)])


# ---------------------------------------------------------------------------
# bounding boxes and dataset filters


def _as_points(obj) -> np.ndarray:
    if isinstance(obj, TriMesh):
        return obj.vertices
    if isinstance(obj, PointCloud):
        return obj.points
    return np.asarray(obj, dtype=float)


def bbox_of(obj) -> BBox:
    pts = _as_points(obj)
    if len(pts) == 0:
        raise ValueError("empty input")
    return BBox(pts.min(axis=0), pts.max(axis=0))


def bbox_dims(obj) -> tuple[float, float, float]:
    """Sorted (ascending) axis-aligned bounding box edge lengths."""
    box = bbox_of(obj)
    dims = np.sort(box.max_corner - box.min_corner)
    return float(dims[0]), float(dims[1]), float(dims[2])


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: str | None = None
    volume_from_hull: bool = False


# ShapeNet-style profile thresholds (meters, m^3).
MIN_WIDTH_LOW = 0.01
MIN_WIDTH_HIGH = 0.10
MAX_WIDTH_HIGH = 0.30
MIN_VOLUME = 8e-6

# Post-rescale profile thresholds for the three-scale pipeline.
RESCALED_MAX_WIDTH_LOW = 0.05
RESCALED_MAX_WIDTH_HIGH = 0.30
SCALE_BUCKETS = {"small": (0.03, 0.05), "medium": (0.05, 0.07), "large": (0.07, 0.09)}


def filter_shapenet_profile(mesh: TriMesh) -> Verdict:
    """Accept/reject a mesh against the extreme-size rules.

    Rejects when w_min > 0.10 m, w_min < 0.01 m, w_max > 0.30 m, or the
    enclosed volume < 8 cm^3 (all strict). Open meshes fall back to the
    convex-hull volume, flagged on the verdict.
    """
    w_min, _, w_max = bbox_dims(mesh)
    vol, from_hull = mesh_volume(mesh)
    if w_min > MIN_WIDTH_HIGH:
        return Verdict(False, "min-width > 0.1 m", from_hull)
    if w_min < MIN_WIDTH_LOW:
        return Verdict(False, "min-width < 0.01 m", from_hull)
    if w_max > MAX_WIDTH_HIGH:
        return Verdict(False, "max-width > 0.3 m", from_hull)
    if vol < MIN_VOLUME:
        return Verdict(False, "volume < 8 cm^3" + (" (hull)" if from_hull else ""), from_hull)
    return Verdict(True, None, from_hull)


def filter_rescaled_profile(mesh: TriMesh) -> Verdict:
    """Post-rescale acceptance: reject w_max > 0.30 m or w_max < 0.05 m."""
    _, _, w_max = bbox_dims(mesh)
    if w_max > RESCALED_MAX_WIDTH_HIGH:
        return Verdict(False, "max-width > 0.3 m")
    if w_max < RESCALED_MAX_WIDTH_LOW:
        return Verdict(False, "max-width < 0.05 m")
    return Verdict(True, None)


def rescale_min_dim(mesh: TriMesh, target: float) -> TriMesh:
    """Uniformly scale so the smallest bbox dimension equals target."""
    if target <= 0:
        raise ValueError("target must be > 0")
    w_min, _, _ = bbox_dims(mesh)
    if w_min <= 0:
        raise DegenerateExtent("mesh has zero minimal extent")
    return TriMesh(mesh.vertices * (target / w_min), mesh.faces)


# ---------------------------------------------------------------------------
# projected minimal width (rotating calipers)


def _plane_basis(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    v = v / np.linalg.norm(v)
    ref = np.array([0.0, 0.0, 1.0]) if abs(v[2]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(ref, v)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(v, e1)
    return e1, e2


def convex_hull_2d(pts: np.ndarray) -> np.ndarray:
    """Monotone-chain hull, counterclockwise, collinear points dropped."""
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    p = pts[order]
    keep = np.ones(len(p), dtype=bool)
    keep[1:] = np.any(np.diff(p, axis=0) != 0.0, axis=1)
    p = p[keep]
    if len(p) <= 2:
        return p

    def chain(points):
        out = []
        for q in points:
            while len(out) >= 2:
                a, b = out[-2], out[-1]
                if (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0]) <= 0:
                    out.pop()
                else:
                    break
            out.append(q)
        return out

    lower = chain(p)
    upper = chain(p[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 2:  # fully collinear input collapses to the extremes
        hull = np.array([p[0], p[-1]])
    return hull


def min_width_direction_2d(pts: np.ndarray) -> np.ndarray:
    """In-plane unit direction of minimal projected width of a 2D point set.

    Calipers over hull edges: for each edge, the width is the extent along
    the edge normal; the first minimal edge wins.
    """
    hull = convex_hull_2d(pts)
    if len(hull) < 2:
        raise DegenerateProjection("all points project to a single point")
    best_w = np.inf
    best_dir = None
    m = len(hull)
    for i in range(m if m > 2 else 1):
        e = hull[(i + 1) % m] - hull[i]
        ln = np.hypot(e[0], e[1])
        if ln < 1e-15:
            continue
        nrm = np.array([-e[1], e[0]]) / ln
        proj = pts @ nrm
        w = proj.max() - proj.min()
        if w < best_w - 1e-15:
            best_w = w
            best_dir = nrm
    if best_dir is None:
        raise DegenerateProjection("degenerate hull")
    return best_dir


def projected_min_width_direction(cloud, v) -> np.ndarray:
    """Direction (unit, orthogonal to v) of minimal width of the cloud
    projected on the plane orthogonal to v.

    Sign convention: non-negative dot with +z, tie-broken by +y then +x.
    """
    pts = _as_points(cloud)
    v = np.asarray(v, dtype=float)
    e1, e2 = _plane_basis(v)
    uv = np.stack([pts @ e1, pts @ e2], axis=1)
    if len(np.unique(uv.round(decimals=12), axis=0)) < 2:
        raise DegenerateProjection("all points project to a single point")
    d2 = min_width_direction_2d(uv)
    d3 = d2[0] * e1 + d2[1] * e2
    d3 /= np.linalg.norm(d3)
    for axis in (np.array([0.0, 0.0, 1.0]), np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0])):
        dot = d3 @ axis
        if abs(dot) > 1e-12:
            if dot < 0:
                d3 = -d3
            break
    return d3


# ---------------------------------------------------------------------------
# point-cloud JSON io


def cloud_to_json(cloud: PointCloud) -> str:
    return json.dumps(
        {"points": [[float(c) for c in p] for p in cloud.points], "labels": cloud.labels.tolist()}
    )


def cloud_from_json(text: str) -> PointCloud:
    data = json.loads(text)
    return PointCloud(np.array(data["points"], dtype=float), np.array(data["labels"]))


# ---------------------------------------------------------------------------
# primitive meshes (used by tests and the desk benchmark)


def box_mesh(a: float, b: float, c: float, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Axis-aligned closed box with edge lengths a, b, c."""
    hx, hy, hz = a / 2.0, b / 2.0, c / 2.0
    cx, cy, cz = center
    v = np.array(
        [
            [cx - hx, cy - hy, cz - hz],
            [cx + hx, cy - hy, cz - hz],
            [cx + hx, cy + hy, cz - hz],
            [cx - hx, cy + hy, cz - hz],
            [cx - hx, cy - hy, cz + hz],
            [cx + hx, cy - hy, cz + hz],
            [cx + hx, cy + hy, cz + hz],
            [cx - hx, cy + hy, cz + hz],
        ]
    )
    f = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # bottom (z-)
            [4, 5, 6], [4, 6, 7],  # top (z+)
            [0, 1, 5], [0, 5, 4],  # y-
            [2, 3, 7], [2, 7, 6],  # y+
            [1, 2, 6], [1, 6, 5],  # x+
            [3, 0, 4], [3, 4, 7],  # x-
        ],
        dtype=np.int64,
    )
    return TriMesh(v, f)


def icosphere_mesh(radius: float, subdivisions: int = 2, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Closed sphere approximation from a subdivided icosahedron."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [v / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}
        new_faces = []

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.array(verts) * radius + np.asarray(center, dtype=float)
    return TriMesh(v, np.array(faces, dtype=np.int64))


def inertia_from_cloud(cloud: PointCloud, mass: float) -> np.ndarray:
    """Inertia tensor of the surface samples as equal point masses about
    the centroid. A thin-shell approximation, adequate for slow objects."""
    pts = cloud.points - cloud.points.mean(axis=0)
    m = mass / len(pts)
    r2 = np.einsum("ij,ij->i", pts, pts)
    eye_term = np.eye(3) * (m * r2.sum())
    outer = m * pts.T @ pts
    return eye_term - outer
