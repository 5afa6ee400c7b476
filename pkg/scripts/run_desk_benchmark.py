"""Desk-scale benchmark: train on two primitives, evaluate 50 rollouts.

Builds a sphere (r = 3 cm) and a box (4 x 5 x 6 cm), both 0.1 kg, trains
the desk-preset curriculum on them, then records 25 evaluation rollouts
per object with freshly sampled objectives and reports the protocol
metrics. Ablation switches mirror the training CLI.

Usage:
    python scripts/run_desk_benchmark.py --out runs/desk [--epochs N]
        [--seed N] [--no-guidance] [--phase-switch-epoch N]
        [--rollouts-per-object N] [--skip-train]
"""

import argparse
import json
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np

from graspsynth import geometry as geo
from graspsynth.catalog import load_all_assets, load_catalog, preprocess_directory
from graspsynth.cli import main as cli_main
from graspsynth.config import config_hash, config_to_dict, desk_preset
from graspsynth.env import rollout_eval
from graspsynth.evalkit import aggregate, compute_metrics, report_csv, report_json
from graspsynth.hand import load_preset
from graspsynth.objectives import objective_from_dict, resolve_defaults, sample_objectives
from graspsynth.train import Trainer, load_checkpoint
from graspsynth.trajectory import atomic_write_text, write_trajectory


def build_assets_dir(root: Path) -> Path:
    meshes = root / "meshes"
    meshes.mkdir(parents=True, exist_ok=True)
    geo.save_obj(geo.icosphere_mesh(0.03, 2), meshes / "sphere3cm.obj")
    geo.save_obj(geo.box_mesh(0.04, 0.05, 0.06), meshes / "box456.obj")
    return meshes


def run_benchmark(out: Path, epochs=None, seed=0, guidance=True, phase_switch=None,
                  rollouts_per_object=25, skip_train=False, distance_features=True,
                  quiet=False, lr=None, updates=None, steps=None):
    out.mkdir(parents=True, exist_ok=True)
    meshes = build_assets_dir(out)
    catalog_path = out / "catalog.json"
    preprocess_directory(meshes, "shapenet", catalog_path, n_points=1200, seed=0, mass=0.1)
    catalog = load_catalog(catalog_path)
    assets = load_all_assets(catalog)

    cfg = desk_preset()
    cfg.seed = seed
    cfg.ppo.master_seed = seed
    if epochs is not None:
        cfg.ppo.epochs = epochs
        cfg.ppo.phase_switch_epoch = int(round(0.4 * epochs))
    if phase_switch is not None:
        cfg.ppo.phase_switch_epoch = phase_switch
    cfg.guidance = guidance
    cfg.distance_features = distance_features
    if lr is not None:
        cfg.ppo.learning_rate = lr
    if updates is not None:
        cfg.ppo.updates_per_epoch = updates
    if steps is not None:
        cfg.ppo.steps_per_epoch = steps
    cfg.catalog_path = str(catalog_path)
    cfg.output_dir = str(out)

    morph = load_preset(cfg.morphology)
    ckpt_dir = out / "checkpoints"
    if not skip_train:
        atomic_write_text(out / "config.json", json.dumps(
            {"config": config_to_dict(cfg), "config_hash": config_hash(cfg)},
            sort_keys=True, indent=1) + "\n")
        trainer = Trainer(cfg, assets, morph)
        t0 = time.time()
        trainer.train(log_path=out / "train_log.jsonl", checkpoint_dir=ckpt_dir, quiet=quiet)
        print(f"training took {(time.time() - t0) / 60:.1f} min")
    ckpt = sorted(ckpt_dir.glob("*.ckpt"))[-1]
    data = load_checkpoint(ckpt)
    policy, normalizer = data["policy"], data["normalizer"]
    normalizer.freeze()

    records = []
    roll_dir = out / "rollouts"
    roll_dir.mkdir(exist_ok=True)
    for asset in assets:
        for k in range(rollouts_per_object):
            seq = np.random.SeedSequence([seed, 555, k])
            T = sample_objectives(asset, seed=int(seq.generate_state(1)[0] % 2**31))
            traj = rollout_eval(
                policy, normalizer, asset, T, morph,
                physics_cfg=cfg.physics, action_cfg=cfg.action, eval_cfg=cfg.eval,
                guidance=cfg.guidance, distance_features=cfg.distance_features,
                mass=asset.mass, config_hash=data["config_hash"],
            )
            write_trajectory(traj, roll_dir / f"traj_{asset.object_id}_{k:03d}.jsonl")
            records.append(compute_metrics(traj, T, asset, morph))
    rows = aggregate(records)
    atomic_write_text(out / "report.csv", report_csv(rows))
    atomic_write_text(out / "report.json", report_json(rows, 1, data["config_hash"]))
    for row in rows:
        print(f"{row['group']}: n={row['n']} success={row['success_rate_pct']:.1f}% "
              f"mid={row['mid_err_cm']:.2f}cm head={row['head_err_rad']:.3f}rad "
              f"rot={row['rot_err_rad']:.3f}rad")
    overall = rows[-1]
    return overall, records


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--epochs", type=int)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--no-guidance", action="store_true")
    ap.add_argument("--no-distance-features", action="store_true")
    ap.add_argument("--phase-switch-epoch", type=int)
    ap.add_argument("--rollouts-per-object", type=int, default=25)
    ap.add_argument("--skip-train", action="store_true", help="reuse existing checkpoints")
    ap.add_argument("--quiet", action="store_true")
    ap.add_argument("--lr", type=float)
    ap.add_argument("--updates-per-epoch", type=int)
    ap.add_argument("--steps-per-epoch", type=int)
    args = ap.parse_args()
    run_benchmark(
        Path(args.out), epochs=args.epochs, seed=args.seed,
        guidance=not args.no_guidance, phase_switch=args.phase_switch_epoch,
        rollouts_per_object=args.rollouts_per_object, skip_train=args.skip_train,
        distance_features=not args.no_distance_features, quiet=args.quiet,
        lr=args.lr, updates=args.updates_per_epoch, steps=args.steps_per_epoch,
    )


if __name__ == "__main__":
    main()
