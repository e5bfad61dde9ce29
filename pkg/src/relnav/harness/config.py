"""Layered run configuration: built-in defaults < JSON file < ``section.key=value`` overrides."""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json

from ..fusion import ReliabilityConfig, TrainConfig
from ..planner import PlannerConfig
from ..simworld import SimConfig


class ConfigError(ValueError):
    pass


def _fields(cls) -> dict:
    return {f.name: (list(f.default) if isinstance(f.default, tuple) else f.default)
            for f in dataclasses.fields(cls)}


def default_config() -> dict:
    """The full key/value tree with every default spelled out."""
    return {
        "simworld": _fields(SimConfig),
        "reliability": _fields(ReliabilityConfig),
        "encoders": {"image_size": 64, "pool": 16, "polar_bins": 8},
        "fusion": {**_fields(TrainConfig), "optimizer": "adam", "learning_rate": 0.003, "epochs": 50,
                   "batch_size": 32, "weight_decay": 1e-5},
        "planner": {**_fields(PlannerConfig), "window": 6.0, "r_th": 0.5},
        "harness": {
            "seed": 0,
            "record_episodes": 150,
            "record_max_steps": 60,
            "record_mix": ["open"] + 3 * ["cluttered", "dark", "occluded", "combined"],
            "val_fraction": 0.2,
            "eval_episodes": 50,
            "eval_difficulties": ["open", "cluttered"],
            "eval_suites": ["graspe", "graspe_no_reliability", "dwa_baseline"],
            "max_steps": 400,
        },
    }


def merge(base: dict, overlay: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in overlay.items():
        where = f"{path}.{k}" if path else k
        if k not in out:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(out[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{where!r} must be a section")
            out[k] = merge(out[k], v, where)
        else:
            out[k] = v
    return out


def parse_override(text: str) -> dict:
    """``section.key=value`` with a JSON value (bare strings allowed)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form section.key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node: dict = {}
    cur = node
    parts = key.strip().split(".")
    for p in parts[:-1]:
        cur[p] = {}
        cur = cur[p]
    cur[parts[-1]] = value
    return node


def load_config(path: str | None = None, overrides: list[str] | tuple = ()) -> dict:
    cfg = default_config()
    if path:
        try:
            with open(path) as fh:
                cfg = merge(cfg, json.load(fh))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
    for o in overrides:
        cfg = merge(cfg, parse_override(o))
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _build(cls, section: dict):
    kw = {}
    for f in dataclasses.fields(cls):
        if f.name in section:
            v = section[f.name]
            kw[f.name] = tuple(v) if isinstance(f.default, tuple) else v
    try:
        return cls(**kw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid {cls.__name__}: {e}") from e


def sim_config(cfg: dict) -> SimConfig:
    return _build(SimConfig, {**cfg["simworld"], "max_steps": cfg["harness"]["max_steps"]})


def planner_config(cfg: dict) -> PlannerConfig:
    return _build(PlannerConfig, cfg["planner"])


def train_config(cfg: dict) -> TrainConfig:
    return _build(TrainConfig, cfg["fusion"])


def reliability_config(cfg: dict) -> ReliabilityConfig:
    return _build(ReliabilityConfig, cfg["reliability"])
