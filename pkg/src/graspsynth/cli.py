"""Command line interface: preprocess | train | rollout | eval.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import glob as globmod
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import catalog as cat
from .config import PRESETS, RunConfig, config_hash, config_to_dict, load_config
from .env import rollout_eval
from .evalkit import aggregate, compute_metrics, report_csv, report_json
from .hand import load_morphology, load_preset
from .objectives import (
    UnsampleableObject,
    objective_from_dict,
    resolve_defaults,
    sample_objectives,
)
from .physics import NumericalBlowup
from .train import Trainer, load_checkpoint
from .trajectory import SchemaMismatch, atomic_write_text, read_trajectory, write_trajectory

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="graspsynth", description="objective-driven grasp synthesis")
    sub = parser.add_subparsers(dest="command", required=True)

    pre = sub.add_parser("preprocess", help="filter meshes and sample surface clouds")
    pre.add_argument("--input", required=True, help="directory of .obj meshes")
    pre.add_argument("--profile", choices=("shapenet", "objaverse"), default="shapenet")
    pre.add_argument("--out", required=True, help="catalog JSON path")
    pre.add_argument("--n-points", type=int, default=2000)
    pre.add_argument("--seed", type=int, default=0)
    pre.add_argument("--mass", type=float, default=0.1)

    tr = sub.add_parser("train", help="train a grasping policy")
    tr.add_argument("--config", help="run config JSON")
    tr.add_argument("--preset", choices=tuple(PRESETS), help="built-in config preset")
    tr.add_argument("--objects", required=True, help="catalog JSON")
    tr.add_argument("--morphology", help="preset name or JSON path")
    tr.add_argument("--seed", type=int)
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--phase-switch-epoch", type=int, dest="phase_switch_epoch")
    tr.add_argument("--no-guidance", action="store_true")
    tr.add_argument("--no-distance-features", action="store_true")
    tr.add_argument("--out", required=True, help="output directory")

    ro = sub.add_parser("rollout", help="record evaluation trajectories")
    ro.add_argument("--checkpoint", required=True)
    ro.add_argument("--catalog", required=True)
    ro.add_argument("--object", required=True, help="object id from the catalog")
    ro.add_argument("--objectives", help="JSON file with a list of objective sets")
    ro.add_argument("--n", type=int, default=1, help="number of sampled objective sets")
    ro.add_argument("--seed", type=int, default=0)
    ro.add_argument("--no-guidance", action="store_true")
    ro.add_argument("--out", required=True)

    ev = sub.add_parser("eval", help="compute metrics over recorded trajectories")
    ev.add_argument("--glob", required=True, help="trajectory file glob")
    ev.add_argument("--catalog", required=True)
    ev.add_argument("--out-csv", required=True)
    ev.add_argument("--out-json", required=True)
    return parser


def _load_morphology(name_or_path):
    if name_or_path and (name_or_path.endswith(".json") or os.path.sep in name_or_path):
        return load_morphology(name_or_path)
    return load_preset(name_or_path)


def cmd_preprocess(args) -> int:
    if not os.path.isdir(args.input):
        raise FileNotFoundError(f"input directory {args.input!r} does not exist")
    catalog = cat.preprocess_directory(
        args.input, args.profile, args.out, n_points=args.n_points, seed=args.seed, mass=args.mass
    )
    n_total = len(catalog["objects"]) + len(catalog["rejected"])
    print(f"accepted {len(catalog['objects'])} of {n_total} candidates -> {args.out}")
    if not catalog["objects"]:
        print("warning: catalog is empty", file=sys.stderr)
    for err in catalog["errors"]:
        print(f"error: {err['id']}: {err['error']}", file=sys.stderr)
    return EXIT_OK


def _build_run_config(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = PRESETS[args.preset]()
    else:
        cfg = PRESETS["desk"]()
    if args.morphology:
        cfg.morphology = args.morphology
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.ppo.master_seed = args.seed
    if args.epochs is not None:
        cfg.ppo.epochs = args.epochs
        cfg.ppo.phase_switch_epoch = int(round(0.4 * args.epochs))
    if args.phase_switch_epoch is not None:
        cfg.ppo.phase_switch_epoch = args.phase_switch_epoch
    if args.no_guidance:
        cfg.guidance = False
    if args.no_distance_features:
        cfg.distance_features = False
    cfg.catalog_path = args.objects
    cfg.output_dir = args.out
    return cfg


def cmd_train(args) -> int:
    cfg = _build_run_config(args)
    catalog = cat.load_catalog(args.objects)
    assets = cat.load_all_assets(catalog)
    if not assets:
        raise cat.CatalogError("catalog holds no accepted objects")
    morph = _load_morphology(cfg.morphology)
    os.makedirs(args.out, exist_ok=True)
    atomic_write_text(
        Path(args.out) / "config.json",
        json.dumps({"config": config_to_dict(cfg), "config_hash": config_hash(cfg)},
                   sort_keys=True, indent=1) + "\n",
    )
    print(f"preset={cfg.preset} morphology={morph.name} epochs={cfg.ppo.epochs} "
          f"steps_per_epoch={cfg.ppo.steps_per_epoch} envs={cfg.ppo.num_envs} "
          f"guidance={cfg.guidance} distance_features={cfg.distance_features} "
          f"config_hash={config_hash(cfg)}")
    trainer = Trainer(cfg, assets, morph)
    last = trainer.train(
        log_path=Path(args.out) / "train_log.jsonl",
        checkpoint_dir=Path(args.out) / "checkpoints",
    )
    print(f"final checkpoint: {last}")
    return EXIT_OK


def cmd_rollout(args) -> int:
    data = load_checkpoint(args.checkpoint)
    cfg: RunConfig = data["config"]
    if args.no_guidance:
        cfg.guidance = False
    catalog = cat.load_catalog(args.catalog)
    asset = cat.load_asset(catalog, args.object)
    morph = _load_morphology(data["morphology"])
    if data["policy"].obs_dim != 16 * len(morph.links) + 19:
        raise cat.CatalogError("checkpoint does not match the morphology")
    normalizer = data["normalizer"]
    normalizer.freeze()
    os.makedirs(args.out, exist_ok=True)

    objectives = []
    if args.objectives:
        with open(args.objectives) as fh:
            for entry in json.load(fh):
                objectives.append(
                    resolve_defaults(
                        objective_from_dict(entry, n_points=len(asset.cloud.points)), asset
                    )
                )
    else:
        for k in range(args.n):
            seq = np.random.SeedSequence([args.seed, k])
            objectives.append(
                sample_objectives(asset, seed=int(seq.generate_state(1)[0] % 2**31))
            )

    for k, T in enumerate(objectives):
        traj = rollout_eval(
            data["policy"], normalizer, asset, T, morph,
            physics_cfg=cfg.physics, action_cfg=cfg.action, eval_cfg=cfg.eval,
            guidance=cfg.guidance, distance_features=cfg.distance_features,
            mass=asset.mass, config_hash=data["config_hash"],
        )
        write_trajectory(traj, Path(args.out) / f"traj_{args.object.replace('#', '_')}_{k:03d}.jsonl")
    print(f"wrote {len(objectives)} trajectories to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    paths = sorted(globmod.glob(args.glob))
    if not paths:
        raise FileNotFoundError(f"no trajectories match {args.glob!r}")
    catalog = cat.load_catalog(args.catalog)
    records = []
    failures = []
    schema = None
    run_hash = ""
    for path in paths:
        try:
            traj = read_trajectory(path)
            asset = cat.load_asset(catalog, traj.object_id)
            T = resolve_defaults(
                objective_from_dict(traj.objective, n_points=len(asset.cloud.points)), asset
            )
            morph = _load_morphology(traj.morphology)
            records.append(compute_metrics(traj, T, asset, morph))
            schema = traj.schema
            run_hash = traj.config_hash
        except (SchemaMismatch, json.JSONDecodeError, KeyError, cat.CatalogError) as exc:
            failures.append((path, str(exc)))
    if failures:
        for path, msg in failures:
            print(f"error: {path}: {msg}", file=sys.stderr)
        raise SchemaMismatch(f"{len(failures)} trajectory file(s) unreadable")
    rows = aggregate(records)
    atomic_write_text(args.out_csv, report_csv(rows))
    atomic_write_text(args.out_json, report_json(rows, schema, run_hash))
    for row in rows:
        print(f"{row['group']}: n={row['n']} success={row['success_rate_pct']:.1f}% "
              f"mid={row['mid_err_cm']:.2f}cm head={row['head_err_rad']:.3f}rad")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "preprocess":
            return cmd_preprocess(args)
        if args.command == "train":
            return cmd_train(args)
        if args.command == "rollout":
            return cmd_rollout(args)
        if args.command == "eval":
            return cmd_eval(args)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalBlowup as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, KeyError, SchemaMismatch, cat.CatalogError, UnsampleableObject, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
