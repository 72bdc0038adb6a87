"""Run configuration: one place for every default, strict key checking.

A config file is JSON with the same nesting as ``DEFAULTS``; unknown keys
are rejected. Command-line flags override file values, which override the
defaults. All randomness flows from the ``seed`` entries; nothing reads the
clock or platform entropy.
"""

from __future__ import annotations

import json
from pathlib import Path

from .bundle import LevelPartition
from .diffusion import PredictorConfig, PredictorTrainConfig
from .mapper import TrainConfig

DEFAULTS = {
    "seed": 0,
    "mapper": {
        "steps": 2000,
        "batch_size": 64,          # batch size used throughout
        "hidden": 128,             # desk-scale hidden width
        "learning_rate": 1e-3,     # desk default; 0.5 is the reported
                                   # large-scale setting (see README)
        "eval_interval": 200,
        "heldout_fraction": 0.1,
        "heldout_pairs": 256,
        "condition_mode": "delta",
    },
    "predictor": {
        "steps": 8000,
        "batch_size": 64,
        "learning_rate": 1e-3,
        "eval_interval": 500,
        "loss_norm": "l1",         # absolute-error objective by default
        "hidden": 64,
        "temb_dim": 64,
        "groups": 4,
    },
    "schedule": {
        "t_max": 100,
        "beta_start": 1e-4,
        "beta_end": 0.02,
        "sigma_mode": "ddim",
    },
    "disentangle": {
        "tau": 0.03,
        "probe_step": 0.5,
        "base_codes": 16,
    },
    "synthetic": {
        "records": 1000,
        "clip_dim": 64,
        "style_dim": 96,
        "c_end": 32,
        "m_end": 64,
        "offset_norm": 1.5,
        "noise": 0.05,
    },
    "debug": {
        "allow_strength": False,   # gate for the direction-rescale knob
    },
}


class ConfigError(Exception):
    """Unknown key or malformed config file."""


def _merge(base: dict, override: dict, path="") -> dict:
    merged = dict(base)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {here!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {here!r} must be a section")
            merged[key] = _merge(base[key], value, here)
        else:
            merged[key] = value
    return merged


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, overlaid with the file (if any), overlaid with overrides.

    ``overrides`` uses dotted keys ("mapper.steps") with None values skipped,
    which is how command-line flags are threaded through.
    """
    config = DEFAULTS
    if path is not None:
        try:
            loaded = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        config = _merge(config, loaded)
    if overrides:
        nested: dict = {}
        for dotted, value in overrides.items():
            if value is None:
                continue
            node = nested
            *heads, leaf = dotted.split(".")
            for head in heads:
                node = node.setdefault(head, {})
            node[leaf] = value
        config = _merge(config, nested)
    return config


def mapper_train_config(config: dict) -> TrainConfig:
    m = config["mapper"]
    return TrainConfig(steps=int(m["steps"]), batch_size=int(m["batch_size"]),
                       hidden=int(m["hidden"]),
                       learning_rate=float(m["learning_rate"]),
                       eval_interval=int(m["eval_interval"]),
                       heldout_fraction=float(m["heldout_fraction"]),
                       heldout_pairs=int(m["heldout_pairs"]),
                       condition_mode=m["condition_mode"])


def predictor_train_config(config: dict) -> PredictorTrainConfig:
    p = config["predictor"]
    return PredictorTrainConfig(
        steps=int(p["steps"]), batch_size=int(p["batch_size"]),
        learning_rate=float(p["learning_rate"]),
        eval_interval=int(p["eval_interval"]), loss_norm=p["loss_norm"],
        predictor=PredictorConfig(hidden=int(p["hidden"]),
                                  temb_dim=int(p["temb_dim"]),
                                  groups=int(p["groups"])))


def synthetic_partition(config: dict) -> LevelPartition:
    s = config["synthetic"]
    return LevelPartition(int(s["c_end"]), int(s["m_end"]), int(s["style_dim"]))
