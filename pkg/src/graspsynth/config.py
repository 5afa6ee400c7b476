"""Run configuration: training hyperparameters, physics constants, reward
overrides and sampler settings, with strict JSON parsing and the two
built-in presets.

The `paper` preset carries the published hyperparameters; `desk` shrinks
the run to something a workstation finishes in well under an afternoon
while keeping every mechanism identical.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .physics import PhysicsConfig

CONFIG_SCHEMA = 1
# Fields whose values are filesystem paths; excluded from the config hash
# so artifacts produced in different directories stay comparable.
_PATH_FIELDS = {"catalog_path", "output_dir", "morphology_path"}


@dataclass
class PpoConfig:
    epochs: int = 10_000
    steps_per_epoch: int = 30_000
    episode_len: int = 150
    batch_size: int = 2000
    updates_per_epoch: int = 20
    gamma: float = 0.996
    gae_lambda: float = 0.95
    clip: float = 0.2
    max_grad_norm: float = 0.5
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    learning_rate: float = 5e-4
    hidden_units: int = 128
    hidden_layers: int = 2
    phase_switch_epoch: int | None = None  # defaults to 40% of epochs
    num_envs: int = 8
    master_seed: int = 0
    init_log_std: float = -0.5

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.gae_lambda <= 1.0):
            raise ValueError("gamma and gae_lambda must lie in [0, 1]")
        if self.clip <= 0:
            raise ValueError("clip must be > 0")
        if self.phase_switch_epoch is None:
            self.phase_switch_epoch = int(round(0.4 * self.epochs))


@dataclass
class SamplerConfig:
    max_retries: int = 50
    narrow_limit: float = 0.12
    cloud_points: int = 2000


@dataclass
class ActionConfig:
    finger_scale: float = 0.1  # rad of residual target per unit action
    wrist_translation_scale: float = 0.02  # m per unit action
    wrist_rotation_scale: float = 0.1  # rad per unit action


@dataclass
class EvalConfig:
    grasp_steps: int = 100
    lift_steps: int = 80
    lift_height: float = 0.15


@dataclass
class RunConfig:
    morphology: str = "allegro16"
    morphology_path: str | None = None  # overrides the preset when set
    ppo: PpoConfig = field(default_factory=PpoConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    action: ActionConfig = field(default_factory=ActionConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    reward_overrides: dict = field(default_factory=dict)
    close_bias_init: float = 0.0  # initial mean-action bias on flexion DoF
    guidance: bool = True
    distance_features: bool = True
    object_mass: float = 0.1
    catalog_path: str | None = None
    output_dir: str = "runs/default"
    seed: int = 0
    preset: str = "custom"


def paper_preset() -> RunConfig:
    return RunConfig(preset="paper", ppo=PpoConfig())


def desk_preset() -> RunConfig:
    """Workstation-scale shrink: fewer, shorter epochs and contact constants
    tuned for reliable grasping of the small benchmark primitives."""
    ppo = PpoConfig(
        epochs=600,
        steps_per_epoch=2000,
        num_envs=8,
        batch_size=2000,
    )
    physics = PhysicsConfig(
        contact_kn=692.5,
        contact_cn=11.0,
        contact_ks=426.1,
        contact_kt=18.2,
        friction_mu=1.2,
        finger_torque_limit=0.89,
        contact_lateral_margin=0.03,
        rolling_damping=0.02,
    )
    return RunConfig(preset="desk", ppo=ppo, physics=physics, close_bias_init=0.5)


PRESETS = {"paper": paper_preset, "desk": desk_preset}


def _from_dict(cls, data: dict, path: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise KeyError(f"unknown config keys at {path}: {sorted(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        if dataclasses.is_dataclass(f.type) or f.name in ("ppo", "physics", "sampler", "action", "eval"):
            sub = {"ppo": PpoConfig, "physics": PhysicsConfig, "sampler": SamplerConfig,
                   "action": ActionConfig, "eval": EvalConfig}[f.name]
            value = _from_dict(sub, value, f"{path}.{f.name}")
        kwargs[f.name] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    preset_name = data.pop("preset", None)
    base = PRESETS[preset_name]() if preset_name in PRESETS else RunConfig()
    merged = config_to_dict(base)
    merged.pop("preset", None)

    def deep_merge(dst, src, path="config"):
        for key, value in src.items():
            if key not in dst:
                raise KeyError(f"unknown config key at {path}: {key!r}")
            if isinstance(value, dict) and isinstance(dst[key], dict) and key != "reward_overrides":
                deep_merge(dst[key], value, f"{path}.{key}")
            else:
                dst[key] = value

    deep_merge(merged, data)
    cfg = _from_dict(RunConfig, merged, "config")
    cfg.preset = preset_name or "custom"
    return cfg


def config_to_dict(cfg: RunConfig) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(cfg)))


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def config_hash(cfg: RunConfig) -> str:
    """Stable digest of the semantic configuration (paths excluded)."""
    data = config_to_dict(cfg)
    for key in _PATH_FIELDS:
        data.pop(key, None)
    blob = json.dumps(data, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
