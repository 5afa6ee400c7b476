"""Training loop: multi-environment collection, curriculum phase switch,
advantage estimation, policy updates and deterministic checkpointing.

Collection runs the environments sequentially but draws every random
number from per-(env, episode) streams, so merged batches do not depend on
interleaving and single-seed runs reproduce bit for bit.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig, config_hash
from .env import GraspEnv, InitialPenetration
from .geometry import ObjectAsset
from .hand import HandMorphology
from .objectives import UnsampleableObject, sample_objectives
from .perception import RunningNormalizer, feature_dim
from .policy import Adam, Policy
from .ppo import compute_gae, ppo_update
from .rewards import phase_weights


CHECKPOINT_SCHEMA = 1


# ---------------------------------------------------------------------------
# deterministic checkpoint container: one JSON manifest line + raw array blob


def save_checkpoint(path, policy: Policy, optimizer: Adam, normalizer: RunningNormalizer,
                    cfg: RunConfig, epoch: int, episode_counters: list) -> None:
    arrays = {}
    for k, v in policy.state_dict().items():
        arrays[f"policy:{k}"] = v
    for k, v in optimizer.state_dict().items():
        if isinstance(v, np.ndarray):
            arrays[f"adam:{k}"] = v
    norm_state = normalizer.state_dict()
    arrays["norm:mean"] = norm_state["mean"]
    arrays["norm:m2"] = norm_state["m2"]

    manifest = {
        "schema": CHECKPOINT_SCHEMA,
        "kind": "checkpoint",
        "config": _cfg_dict(cfg),
        "config_hash": config_hash(cfg),
        "morphology": cfg.morphology,
        "epoch": epoch,
        "episode_counters": list(episode_counters),
        "adam_t": optimizer.t,
        "adam_lr": optimizer.lr,
        "norm_count": norm_state["count"],
        "norm_frozen": norm_state["frozen"],
        "policy_shape": {
            "obs_dim": policy.obs_dim, "act_dim": policy.act_dim,
            "hidden_units": policy.hidden_units, "hidden_layers": policy.hidden_layers,
        },
        "arrays": {k: {"shape": list(v.shape), "dtype": str(v.dtype)} for k, v in sorted(arrays.items())},
    }
    blob = b"".join(np.ascontiguousarray(arrays[k]).tobytes() for k in sorted(arrays))
    header = json.dumps(manifest, sort_keys=True).encode()
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(header + b"\n")
        fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path):
    from .config import config_from_dict

    with open(path, "rb") as fh:
        manifest = json.loads(fh.readline().decode())
        if manifest.get("kind") != "checkpoint" or manifest.get("schema") != CHECKPOINT_SCHEMA:
            raise ValueError(f"{path}: not a compatible checkpoint")
        blob = fh.read()
    arrays = {}
    offset = 0
    for name, meta in sorted(manifest["arrays"].items()):
        count = int(np.prod(meta["shape"])) if meta["shape"] else 1
        dtype = np.dtype(meta["dtype"])
        size = count * dtype.itemsize
        arrays[name] = np.frombuffer(blob[offset : offset + size], dtype=dtype).reshape(meta["shape"]).copy()
        offset += size

    shape = manifest["policy_shape"]
    policy = Policy(shape["obs_dim"], shape["act_dim"], shape["hidden_units"], shape["hidden_layers"])
    policy.load_state({k.split(":", 1)[1]: v for k, v in arrays.items() if k.startswith("policy:")})
    optimizer = Adam(policy.params, lr=manifest["adam_lr"])
    adam_state = {"t": manifest["adam_t"], "lr": manifest["adam_lr"]}
    for k, v in arrays.items():
        if k.startswith("adam:"):
            adam_state[k.split(":", 1)[1]] = v
    optimizer.load_state(adam_state)
    normalizer = RunningNormalizer.from_state(
        {"count": manifest["norm_count"], "mean": arrays["norm:mean"],
         "m2": arrays["norm:m2"], "frozen": manifest["norm_frozen"]}
    )
    cfg = config_from_dict(manifest["config"])
    return {
        "policy": policy,
        "optimizer": optimizer,
        "normalizer": normalizer,
        "config": cfg,
        "epoch": manifest["epoch"],
        "episode_counters": manifest["episode_counters"],
        "morphology": manifest["morphology"],
        "config_hash": manifest["config_hash"],
    }


def _cfg_dict(cfg: RunConfig) -> dict:
    """Config echo with filesystem paths removed, so checkpoints from
    identical runs in different directories are byte-identical."""
    from .config import _PATH_FIELDS, config_to_dict

    data = config_to_dict(cfg)
    for key in _PATH_FIELDS:
        data[key] = None
    return data


# ---------------------------------------------------------------------------


@dataclass
class _EnvSlot:
    """One collection worker: current env, observation and bookkeeping."""

    index: int
    episode_counter: int = 0
    env: GraspEnv | None = None
    obs: np.ndarray | None = None
    action_rng: np.random.Generator | None = None
    raw_obs: np.ndarray | None = None
    steps_in_episode: int = 0
    records: list = field(default_factory=list)


class Trainer:
    def __init__(self, cfg: RunConfig, assets: list[ObjectAsset], morph: HandMorphology):
        if not assets:
            raise ValueError("need at least one object")
        self.cfg = cfg
        self.assets = assets
        self.morph = morph
        self.obs_dim = feature_dim(len(morph.links))
        self.act_dim = morph.total_dof + 6
        p = cfg.ppo
        self.policy = Policy(
            self.obs_dim, self.act_dim, p.hidden_units, p.hidden_layers,
            seed=p.master_seed, init_log_std=p.init_log_std,
        )
        if cfg.close_bias_init:
            # start with a gentle closing prior on the flexion DoF so grasps
            # occur from the first epochs; learning reshapes it from there
            bias = np.zeros(self.act_dim)
            bias[: morph.total_dof][morph.flexion_dof_mask()] = cfg.close_bias_init
            self.policy.params["b_mu"] += bias
        self.optimizer = Adam(self.policy.params, lr=p.learning_rate)
        self.normalizer = RunningNormalizer(self.obs_dim)
        self.slots = [_EnvSlot(i) for i in range(p.num_envs)]
        self.epoch = 0
        self.log_records = []

    # -- seeding ---------------------------------------------------------
    def _episode_seed(self, env_index: int, episode: int, stream: int, attempt: int = 0) -> np.random.Generator:
        seq = np.random.SeedSequence(
            [self.cfg.ppo.master_seed, env_index, episode, stream, attempt]
        )
        return np.random.Generator(np.random.PCG64(seq))

    def _phase(self, epoch: int) -> int:
        return 1 if epoch < self.cfg.ppo.phase_switch_epoch else 2

    def _start_episode(self, slot: _EnvSlot, phase: int) -> None:
        p = self.cfg.ppo
        for attempt in range(20):
            asset = self.assets[(slot.episode_counter * p.num_envs + slot.index) % len(self.assets)]
            seed_rng = self._episode_seed(slot.index, slot.episode_counter, 7, attempt)
            try:
                T = sample_objectives(
                    asset, seed=int(seed_rng.integers(2**31)), max_retries=self.cfg.sampler.max_retries
                )
                env = GraspEnv(
                    asset, self.morph, T, phase,
                    physics_cfg=self.cfg.physics,
                    weights=phase_weights(phase, self.cfg.reward_overrides or None),
                    action_cfg=self.cfg.action,
                    episode_len=p.episode_len,
                    guidance=self.cfg.guidance,
                    distance_features=self.cfg.distance_features,
                    mass=self.cfg.object_mass,
                )
                _, raw = env.reset()
            except (InitialPenetration, UnsampleableObject):
                continue
            slot.env = env
            slot.raw_obs = raw
            slot.obs = self.normalizer.normalize(raw)
            slot.action_rng = self._episode_seed(slot.index, slot.episode_counter, 11)
            slot.steps_in_episode = 0
            slot.episode_counter += 1
            return
        raise RuntimeError("could not initialize an episode after 20 attempts")

    # -- collection ------------------------------------------------------
    def collect_epoch(self, phase: int) -> tuple[dict, dict]:
        p = self.cfg.ppo
        per_env = p.steps_per_epoch // p.num_envs
        for slot in self.slots:
            slot.records = []
            if slot.env is None or slot.env.phase != phase:
                self._start_episode(slot, phase)

        ep_stats = {"r_total": [], "contacts": [], "episodes": 0}
        for _ in range(per_env):
            for slot in self.slots:
                obs = slot.obs
                mu, value, _ = self.policy.forward(obs)
                sigma = np.exp(self.policy.log_std_eff())
                action = mu[0] + sigma * slot.action_rng.standard_normal(self.act_dim)
                logp = float(self.policy.log_prob(mu, action[None, :])[0])
                state, raw_next, breakdown, reward, done = slot.env.step(action)
                slot.records.append(
                    {
                        "obs": obs, "raw_obs": slot.raw_obs, "next_raw_obs": raw_next, "action": action,
                        "logp": logp, "reward": reward, "value": float(value[0]),
                        "done": done, "blowup": slot.env.blown_up, "breakdown": breakdown,
                    }
                )
                slot.steps_in_episode += 1
                slot.raw_obs = raw_next
                slot.obs = self.normalizer.normalize(raw_next)
                if done:
                    ep_stats["episodes"] += 1
                    ep_stats["contacts"].append(int(state.contacts_plus.sum()))
                    self._start_episode(slot, phase)

        # assemble in env order, then step order
        obs_all, raw_all, act_all, logp_all, adv_all, ret_all = [], [], [], [], [], []
        reward_sum = 0.0
        term_sums = {}
        n_steps = 0
        for slot in self.slots:
            recs = slot.records
            if not recs:
                continue
            rewards = np.array([r["reward"] for r in recs])
            values = np.array([r["value"] for r in recs])
            dones = np.array([r["done"] for r in recs])
            # split into episode segments; bootstrap with V(s') on truncation
            start = 0
            for end in list(np.flatnonzero(dones) + 1) + [len(recs)]:
                if end <= start:
                    continue
                seg = slice(start, end)
                if dones[end - 1]:
                    # time-limit truncation bootstraps the value of the next
                    # observation; a blowup terminal bootstraps zero
                    bootstrap = 0.0 if recs[end - 1]["blowup"] else float(
                        self.policy.forward(self.normalizer.normalize(recs[end - 1]["next_raw_obs"]))[1][0]
                    )
                else:
                    bootstrap = float(self.policy.forward(slot.obs)[1][0])
                adv, ret = compute_gae(
                    rewards[seg], values[seg], bootstrap, p.gamma, p.gae_lambda
                )
                adv_all.append(adv)
                ret_all.append(ret)
                start = end
            obs_all.extend(r["obs"][0] if r["obs"].ndim == 2 else r["obs"] for r in recs)
            raw_all.extend(r["raw_obs"] for r in recs)
            act_all.extend(r["action"] for r in recs)
            logp_all.extend(r["logp"] for r in recs)
            reward_sum += float(rewards.sum())
            n_steps += len(recs)
            for r in recs:
                for k, v in r["breakdown"].to_dict().items():
                    term_sums[k] = term_sums.get(k, 0.0) + v

        batch = {
            "obs": np.asarray(obs_all),
            "actions": np.asarray(act_all),
            "logp": np.asarray(logp_all),
            "adv": np.concatenate(adv_all),
            "ret": np.concatenate(ret_all),
        }
        stats = {
            "mean_reward": reward_sum / max(n_steps, 1),
            "episodes": ep_stats["episodes"],
            "mean_final_contacts": float(np.mean(ep_stats["contacts"])) if ep_stats["contacts"] else 0.0,
            "terms": {k: v / max(n_steps, 1) for k, v in term_sums.items()},
            "raw_obs": np.asarray(raw_all),
        }
        return batch, stats

    # -- main loop -------------------------------------------------------
    def train(self, log_path=None, checkpoint_dir=None, checkpoint_every=None, quiet=False):
        p = self.cfg.ppo
        if checkpoint_dir:
            os.makedirs(checkpoint_dir, exist_ok=True)
        checkpoint_every = checkpoint_every or max(1, p.epochs // 10)
        update_rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([p.master_seed, 101]))
        )
        log_fh = open(log_path, "a") if log_path else None
        last_path = None
        for epoch in range(self.epoch, p.epochs):
            t0 = time.time()
            phase = self._phase(epoch)
            batch, stats = self.collect_epoch(phase)
            raw = stats.pop("raw_obs")
            update_stats = ppo_update(self.policy, self.optimizer, batch, p, update_rng)
            self.normalizer.update(raw)
            record = {
                "epoch": epoch,
                "phase": phase,
                "mean_reward": stats["mean_reward"],
                "episodes": stats["episodes"],
                "mean_final_contacts": stats["mean_final_contacts"],
                "terms": stats["terms"],
                "update": {k: v for k, v in update_stats.items() if k != "aborted"},
                "seconds": round(time.time() - t0, 3),
            }
            self.log_records.append(record)
            if log_fh:
                log_fh.write(json.dumps(record, sort_keys=True) + "\n")
                log_fh.flush()
            if not quiet and (epoch % 10 == 0 or epoch == p.epochs - 1):
                print(
                    f"epoch {epoch} phase {phase} reward {stats['mean_reward']:.3f} "
                    f"contacts {stats['mean_final_contacts']:.2f} ({record['seconds']}s)",
                    flush=True,
                )
            self.epoch = epoch + 1
            if checkpoint_dir and ((epoch + 1) % checkpoint_every == 0 or epoch == p.epochs - 1):
                last_path = os.path.join(checkpoint_dir, f"checkpoint_{epoch + 1:05d}.ckpt")
                self.save(last_path)
        if log_fh:
            log_fh.close()
        return last_path

    def save(self, path) -> None:
        save_checkpoint(
            path, self.policy, self.optimizer, self.normalizer, self.cfg,
            self.epoch, [s.episode_counter for s in self.slots],
        )

    @classmethod
    def resume(cls, path, assets, morph) -> "Trainer":
        data = load_checkpoint(path)
        trainer = cls(data["config"], assets, morph)
        trainer.policy = data["policy"]
        trainer.optimizer = data["optimizer"]
        trainer.normalizer = data["normalizer"]
        trainer.epoch = data["epoch"]
        for slot, count in zip(trainer.slots, data["episode_counters"]):
            slot.episode_counter = count
        return trainer
