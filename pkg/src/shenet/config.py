"""Experiment configuration: nested JSON sections with documented defaults.

Unknown sections or keys are rejected; values are coerced to the type of their
default. ``section.key=value`` overrides are applied after the file is parsed.
"""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path

from .errors import ConfigError

# (default, help) per key; a default of None means "optional, no value"
SCHEMA: dict[str, dict[str, tuple]] = {
    "data": {
        "source": ("synthetic", "'synthetic' or 'file'"),
        "path": (None, "trajectory text file (frame_id ped_id x y) when source=file"),
        "test_path": (None, "optional separate test file; otherwise n_test windows are held out"),
        "raster_path": (None, "scene raster JSON {n_cls, h, w, grid}; synthetic data bring their own"),
        "units": ("m", "coordinate unit label, never converted"),
        "t_pas": (8, "observed steps"),
        "t_fut": (12, "predicted steps"),
        "stride": (1, "sliding-window stride for file input"),
        "n_groups": (3, "synthetic lane templates"),
        "per_group": (200, "synthetic trajectories per template"),
        "noise_sigma": (0.05, "synthetic per-point Gaussian jitter"),
        "lateral_spread": (0.0, "synthetic per-person lane offset std"),
        "speed_spread": (0.0, "synthetic per-person relative speed std"),
        "phase_spread": (0.0, "synthetic per-person along-path offset std"),
        "n_test": (100, "held-out test trajectories"),
        "seed": (0, "data generation and split seed"),
    },
    "bank": {
        "k": (32, "initial K-medoids clusters"),
        "max_iter": (100, "K-medoids swap iterations"),
        "init": ("build", "medoid seeding: 'build' or 'random'"),
        "seed": (0, "K-medoids seed (random init and re-clustering)"),
        "theta": ("auto", "update threshold (scene units), 'inf', or 'auto' = theta_fraction x pilot training error"),
        "theta_fraction": (0.75, "fraction of the converged training ADE used when theta='auto'"),
        "beta": (16, "pending additions that trigger re-clustering"),
        "k_recluster": (None, "clusters per merge (default max(1, round(beta/4)))"),
        "translate": (False, "score similarity on pasts translated to their last point"),
    },
    "model": {
        "d_model": (32, "embedding width"),
        "n_heads": (4, "attention heads"),
        "n_layers_traj": (2, "trajectory self-attention layers"),
        "n_layers_cross": (2, "cross-modal layers"),
        "d_ff": (64, "feed-forward width"),
        "head_hidden": (32, "offset MLP hidden width"),
        "dropout": (0.0, "dropout on sublayer outputs"),
        "pos_encoding": (True, "sinusoidal positions on trajectory tokens"),
        "pooling": ("mean", "scene token pooling: 'mean' or 'max'"),
        "coord_scale": (1.0, "coordinates are divided by this before embedding"),
        "head_init_scale": (0.1, "scale of the final offset layer at init"),
        "seed": (0, "parameter initialisation seed"),
    },
    "train": {
        "epochs": (10, "passes over the training set"),
        "pilot_epochs": (None, "epochs of the theta='auto' pilot run (default: epochs)"),
        "lr": (1e-3, "Adam learning rate"),
        "lr_schedule": ("constant", "'constant' or 'cosine' (anneal to zero over the run)"),
        "loss": ("mse", "'mse' or 'cs'"),
        "seed": (0, "example order and dropout seed"),
    },
    "eval": {
        "predictor": ("shenet", "'shenet', 'bank_retrieval' or 'constant_velocity'"),
        "top_k": (1, "candidates per trajectory (best-of-K)"),
        "control_rule": ("mid", "curve-smoothing control: mid | lsq | literal:<t0>"),
        "smooth_pred": (False, "also smooth predictions before CS metrics"),
        "svg_samples": (6, "trajectories drawn in report.svg"),
    },
    "output": {
        "dir": ("runs/default", "directory for bank, checkpoint, reports"),
    },
}

_TYPES = {
    ("data", "path"): str, ("data", "test_path"): str, ("data", "raster_path"): str,
    ("bank", "k_recluster"): int, ("train", "pilot_epochs"): int,
}

CHOICES = {
    ("data", "source"): ("synthetic", "file"),
    ("bank", "init"): ("build", "random"),
    ("model", "pooling"): ("mean", "max"),
    ("train", "loss"): ("mse", "cs"),
    ("train", "lr_schedule"): ("constant", "cosine"),
    ("eval", "predictor"): ("shenet", "bank_retrieval", "constant_velocity"),
}


def defaults() -> dict:
    return {sec: {k: copy.deepcopy(v[0]) for k, v in keys.items()} for sec, keys in SCHEMA.items()}


def describe() -> str:
    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        for k, (default, doc) in keys.items():
            lines.append(f"  {sec}.{k} = {json.dumps(default)}  # {doc}")
    return "\n".join(lines)


def _coerce(sec, key, value):
    default = SCHEMA[sec][key][0]
    where = f"{sec}.{key}"
    if value is None:
        return None
    if (sec, key) == ("bank", "theta"):
        if isinstance(value, str):
            v = value.strip().lower()
            if v == "auto":
                return "auto"
            if v in ("inf", "infinity"):
                return math.inf
            try:
                value = float(v)
            except ValueError:
                raise ConfigError(f"{where}: expected a number, 'inf' or 'auto', got {value!r}") from None
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0:
            raise ConfigError(f"{where}: expected a non-negative number, got {value!r}")
        return float(value)
    if (sec, key) == ("bank", "beta") and isinstance(value, str) and value.strip().lower() in ("inf", "infinity"):
        return math.inf
    typ = _TYPES.get((sec, key), type(default))
    if typ is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or (isinstance(value, float) and not value.is_integer()):
            if (sec, key) == ("bank", "beta") and isinstance(value, float) and math.isinf(value):
                return value
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if typ is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        choices = CHOICES.get((sec, key))
        if choices and value not in choices:
            raise ConfigError(f"{where}: must be one of {choices}, got {value!r}")
        return value
    return value


def merge(base: dict, updates: dict) -> dict:
    cfg = copy.deepcopy(base)
    if not isinstance(updates, dict):
        raise ConfigError("configuration must be an object of sections")
    for sec, vals in updates.items():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown config section {sec!r}")
        if not isinstance(vals, dict):
            raise ConfigError(f"config section {sec!r} must be an object")
        for k, v in vals.items():
            if k not in SCHEMA[sec]:
                raise ConfigError(f"unknown config key {sec}.{k}")
            cfg[sec][k] = _coerce(sec, k, v)
    return cfg


def parse_override(text: str) -> tuple[str, str, object]:
    key, sep, raw = text.partition("=")
    sec, dot, name = key.strip().partition(".")
    if not sep or not dot:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    if sec not in SCHEMA or name not in SCHEMA[sec]:
        raise ConfigError(f"unknown config key {key.strip()}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return sec, name, value


def load_config(path=None, overrides=(), base: dict | None = None) -> dict:
    cfg = copy.deepcopy(base) if base is not None else defaults()
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        cfg = merge(cfg, data)
    for text in overrides:
        sec, name, value = parse_override(text)
        cfg = merge(cfg, {sec: {name: value}})
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    d, b, t = cfg["data"], cfg["bank"], cfg["train"]
    if d["source"] == "file" and not d["path"]:
        raise ConfigError("data.path is required when data.source = 'file'")
    for sec, key in (("data", "t_pas"), ("data", "t_fut"), ("data", "stride"), ("bank", "k"), ("eval", "top_k")):
        if cfg[sec][key] < 1:
            raise ConfigError(f"{sec}.{key} must be >= 1")
    if d["t_pas"] < 2:
        raise ConfigError("data.t_pas must be >= 2")
    if not b["beta"] >= 1:
        raise ConfigError("bank.beta must be >= 1")
    if t["epochs"] < 0:
        raise ConfigError("train.epochs must be >= 0")
    if t["lr"] <= 0:
        raise ConfigError("train.lr must be positive")
    from .smoothing import ControlRule

    ControlRule.parse(cfg["eval"]["control_rule"])
