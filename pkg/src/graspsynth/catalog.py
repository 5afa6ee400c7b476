"""Asset catalog: batch preprocessing of mesh directories into accepted,
cloud-sampled objects, and loading them back for training and rollouts.

A catalog is a JSON file next to an assets directory holding the processed
meshes and their sampled clouds. Mesh files round-trip exactly (vertices
written with repr), so clouds regenerate bit-identically from the recorded
seed when an asset is loaded.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from . import geometry as geo
from .trajectory import atomic_write_text

CATALOG_SCHEMA = 1


class CatalogError(Exception):
    pass


def preprocess_directory(
    input_dir,
    profile: str,
    out_catalog,
    n_points: int = 2000,
    seed: int = 0,
    mass: float = 0.1,
) -> dict:
    """Filter and sample every .obj mesh under input_dir.

    profile "shapenet": keep meshes passing the extreme-size rules as-is.
    profile "objaverse": rescale each mesh to three bucketed minimal
    dimensions (small/medium/large draws) and keep rescaled copies passing
    the post-rescale width rules.
    """
    if profile not in ("shapenet", "objaverse"):
        raise CatalogError(f"unknown profile {profile!r}")
    input_dir = Path(input_dir)
    out_catalog = Path(out_catalog)
    assets_dir = out_catalog.parent / (out_catalog.stem + "_assets")
    os.makedirs(assets_dir, exist_ok=True)

    objects = []
    rejected = []
    errors = []
    for mesh_path in sorted(input_dir.glob("*.obj")):
        stem = mesh_path.stem
        try:
            mesh = geo.load_obj(mesh_path)
        except Exception as exc:  # malformed file: log, continue
            errors.append({"id": stem, "error": str(exc)})
            continue
        if profile == "shapenet":
            verdict = geo.filter_shapenet_profile(mesh)
            if not verdict.accepted:
                rejected.append({"id": stem, "reason": verdict.reason})
                continue
            _emit(objects, assets_dir, stem, mesh, n_points, seed, mass,
                  {"profile": profile, "source": mesh_path.name, "scale": 1.0,
                   "volume_from_hull": verdict.volume_from_hull})
        else:
            for bucket, (lo, hi) in geo.SCALE_BUCKETS.items():
                rng = np.random.Generator(
                    np.random.PCG64(np.random.SeedSequence([seed, _stable_id(stem), _stable_id(bucket)]))
                )
                target = float(rng.uniform(lo, hi))
                try:
                    scaled = geo.rescale_min_dim(mesh, target)
                except geo.DegenerateExtent:
                    rejected.append({"id": f"{stem}#{bucket}", "reason": "degenerate extent"})
                    continue
                verdict = geo.filter_rescaled_profile(scaled)
                if not verdict.accepted:
                    rejected.append({"id": f"{stem}#{bucket}", "reason": verdict.reason})
                    continue
                _emit(objects, assets_dir, f"{stem}#{bucket}", scaled, n_points, seed, mass,
                      {"profile": profile, "source": mesh_path.name, "bucket": bucket,
                       "min_dim_target": target})

    catalog = {
        "schema": CATALOG_SCHEMA,
        "kind": "catalog",
        "profile": profile,
        "n_points": n_points,
        "seed": seed,
        "mass": mass,
        "objects": objects,
        "rejected": rejected,
        "errors": errors,
    }
    atomic_write_text(out_catalog, json.dumps(catalog, sort_keys=True, indent=1) + "\n")
    return catalog


def _stable_id(text: str) -> int:
    h = 0
    for ch in text:
        h = (h * 131 + ord(ch)) % (2**31)
    return h


def _emit(objects, assets_dir: Path, object_id: str, mesh, n_points, seed, mass, provenance):
    safe = object_id.replace("#", "_")
    mesh_file = f"{safe}.obj"
    cloud_file = f"{safe}_cloud.json"
    geo.save_obj(mesh, assets_dir / mesh_file)
    cloud = geo.sample_surface_points(mesh, n_points, seed=seed)
    atomic_write_text(assets_dir / cloud_file, geo.cloud_to_json(cloud) + "\n")
    objects.append(
        {
            "id": object_id,
            "mesh": f"{assets_dir.name}/{mesh_file}",
            "cloud": f"{assets_dir.name}/{cloud_file}",
            "n_points": n_points,
            "seed": seed,
            "mass": mass,
            "provenance": provenance,
        }
    )


def load_catalog(path) -> dict:
    path = Path(path)
    with open(path) as fh:
        catalog = json.load(fh)
    if catalog.get("kind") != "catalog" or catalog.get("schema") != CATALOG_SCHEMA:
        raise CatalogError(f"{path}: not a compatible catalog")
    catalog["_root"] = path.parent
    return catalog


def load_asset(catalog: dict, object_id: str) -> geo.ObjectAsset:
    entry = next((o for o in catalog["objects"] if o["id"] == object_id), None)
    if entry is None:
        raise CatalogError(f"object {object_id!r} not in catalog")
    root = catalog["_root"]
    mesh = geo.load_obj(root / entry["mesh"])
    # regenerate the cloud (bitwise identical to the stored one) so the
    # per-point normals needed for contact are available
    cloud = geo.sample_surface_points(mesh, entry["n_points"], seed=entry["seed"])
    stored = geo.cloud_from_json((root / entry["cloud"]).read_text())
    cloud.labels = stored.labels.copy()
    return geo.ObjectAsset(object_id, mesh, cloud, mass=entry["mass"],
                           scale_info=entry.get("provenance", {}))


def load_all_assets(catalog: dict) -> list:
    return [load_asset(catalog, o["id"]) for o in catalog["objects"]]
