"""Run configuration: YAML files merged under defaults, flag overrides on
top, and a resolved copy written next to every run's outputs."""
from __future__ import annotations

import copy
from pathlib import Path

import yaml

from .envs import Curriculum, OBJECT_PRESETS
from .errors import ConfigError
from .ppo import PpoConfig
from .rewards import RewardWeights, ablate
from .sim import SimParams

DEFAULTS: dict = {
    "mode": "scoop_toss",
    "seed": 0,
    "out_dir": None,
    "sim": {},           # SimParams field overrides
    "reward": {},        # RewardWeights field overrides
    "reward_variant": None,
    "ppo": {},           # PpoConfig field overrides
    "curriculum": {},    # Curriculum field overrides
    "object": "cube",
    "n_objects": 5,
    "meta_time_limit": 60.0,
    "training": {
        "iterations": None,
        "max_minutes": None,
        "target_success": None,
        "dtype": "float32",
        "checkpoint_every": 200,
    },
    "sti": {
        "buffer_size": 10000,
        "segment": 50,
    },
    "eval": {
        "seed": 0,
        "trials_per_sector": 100,
        "trials": 100,
        "episodes": 100,
        "n_objects": 10,
        "time_limit": 100.0,
    },
    "checkpoints": {
        "scoop_toss": None,
        "approach": None,
        "meta": None,
    },
    "teleop": {
        "host": "127.0.0.1",
        "port": 8765,
        "project_distance": 2.0,
        "input_frame": "world",   # or "body"
        "n_objects": 6,
        "spawn_radius": 3.0,
        "time_scale": 1.0,
    },
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown configuration key {where!r}")
        if isinstance(base[key], dict) and key not in (
                "sim", "reward", "ppo", "curriculum"):
            if not isinstance(val, dict):
                raise ConfigError(f"{where!r} must be a mapping")
            out[key] = _merge(base[key], val, where)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_file(path) -> dict:
    path = Path(path)
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a mapping at top level")
    return data


def resolve(config_path=None, overrides: dict | None = None) -> dict:
    """defaults <- file <- explicit overrides, with unknown-key rejection."""
    cfg = DEFAULTS
    if config_path is not None:
        cfg = _merge(cfg, load_file(config_path))
    if overrides:
        cfg = _merge(cfg, overrides)
    return cfg


def save_resolved(cfg: dict, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "config.resolved.yaml"
    with open(path, "w") as f:
        yaml.safe_dump(cfg, f, sort_keys=True)
    return path


def _build(cls, section: dict, what: str):
    try:
        return cls(**section)
    except TypeError as exc:
        raise ConfigError(f"bad {what} settings: {exc}") from exc


def make_sim_params(cfg: dict) -> SimParams:
    section = dict(cfg.get("sim") or {})
    for key in ("height_range", "pitch_range", "mount_offset"):
        if key in section and isinstance(section[key], list):
            section[key] = tuple(section[key])
    return _build(SimParams, section, "sim")


def make_weights(cfg: dict) -> RewardWeights:
    section = dict(cfg.get("reward") or {})
    for key in ("reg_scoop", "reg_approach"):
        if key in section and isinstance(section[key], list):
            section[key] = tuple(section[key])
    w = _build(RewardWeights, section, "reward")
    if cfg.get("reward_variant"):
        w = ablate(w, cfg["reward_variant"])
    return w


def make_ppo(cfg: dict) -> PpoConfig:
    return _build(PpoConfig, cfg.get("ppo") or {}, "ppo")


def make_curriculum(cfg: dict) -> Curriculum:
    return _build(Curriculum, cfg.get("curriculum") or {}, "curriculum")


def make_object_spec(cfg: dict):
    name = cfg.get("object", "cube")
    if name not in OBJECT_PRESETS:
        raise ConfigError(f"unknown object {name!r}; presets: "
                          f"{sorted(OBJECT_PRESETS)}")
    return OBJECT_PRESETS[name]
