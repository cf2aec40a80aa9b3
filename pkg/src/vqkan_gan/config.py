"""Run configuration: one flat key space, defaults for the 16x16 headline setup.

A config file is JSON. Keys may sit at the top level or inside any of the
section objects ``train``, ``generator``, ``data`` and ``study``; sections are
only for readability and are flattened on load. A run manifest is also a
valid config file.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .activations import BasisConfig, grid_intervals
from .data import (
    Dataset,
    load_cifar10_gray,
    load_digits8,
    load_mnist_idx,
    resize_dataset,
    take_prefix,
)
from .generator import GeneratorConfig
from .training import TrainConfig

STUDY_SEEDS = [42, 2, 10, 13, 0, 3407, 7120, 10000, 11111, 16384, 17171, 130000, 14480, 11668, 500001, 620000]

SECTIONS = {
    "train": {
        "iterations": 1000,
        "lr_disc": 0.1,
        "lr_gen": 0.001,
        "optimizer": "sgd",
        "seed": 42,
        "gradient_mode": "finite_difference",
        "fd_step": 1e-3,
        "eval_every": 10,
        "eval_size": 8,
        "swd_projections": 50,
        "metric_seed": 0,
        "shuffle": False,
        "generator": "vqkan",
        "qgan_spread": 1.0,
    },
    "generator": {
        "n_qubits": 8,
        "n_ancilla": 0,
        "depth": 1,
        "n_layers": 1,
        "n_patches": 4,
        "patch_len": 64,
        "readout": "truncate",
        "basis": "bspline",
        "n_basis": 8,
        "n_grid_intervals": grid_intervals(),
        "degree": 3,
    },
    "data": {
        "dataset": "digits",
        "images": None,
        "labels": None,
        "cifar_batches": None,
        "n_train": 1000,
        "label": None,
        "width": 16,
        "height": 16,
    },
    "study": {
        "seeds": STUDY_SEEDS,
        "depths": list(range(1, 9)),
    },
}

DEFAULTS = {k: v for section in SECTIONS.values() for k, v in section.items()}
# keys whose default is None still need a type for command-line coercion
_NULLABLE = {"images": str, "labels": str, "cifar_batches": list, "label": int}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def _flatten(tree: dict) -> dict:
    flat = {}
    for key, value in tree.items():
        if key in SECTIONS and isinstance(value, dict):
            for k, v in value.items():
                if k in flat:
                    raise ConfigError(f"key {k!r} given twice")
                flat[k] = v
        elif key in flat:
            raise ConfigError(f"key {key!r} given twice")
        else:
            flat[key] = value
    return flat


def load_config_file(path) -> dict:
    try:
        tree = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(tree, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    if "config" in tree and "command" in tree:
        tree = tree["config"]
    return _flatten(tree)


def _coerce(key: str, value):
    """Check ``value`` against the type of the default for ``key``."""
    default = DEFAULTS[key]
    if value is None:
        if default is None:
            return None
        raise ConfigError(f"key {key!r} may not be null")
    kind = _NULLABLE.get(key, type(default))
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"key {key!r} expects true or false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"key {key!r} expects an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"key {key!r} expects a number, got {value!r}")
        return float(value)
    if kind is list:
        if not isinstance(value, list):
            raise ConfigError(f"key {key!r} expects a list, got {value!r}")
        return value
    if not isinstance(value, str):
        raise ConfigError(f"key {key!r} expects a string, got {value!r}")
    return value


def parse_override(key: str, text: str):
    """Command-line value: JSON if it parses, a comma list for list keys, else a bare string."""
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text
    kind = _NULLABLE.get(key, type(DEFAULTS.get(key)))
    if kind is list and isinstance(value, (str, int)):
        parts = [p for p in str(value).split(",") if p]
        value = [json.loads(p) if p.lstrip("-").isdigit() else p for p in parts]
    return value


def resolve(file_values: dict | None = None, overrides: dict | None = None) -> dict:
    cfg = dict(DEFAULTS)
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            cfg[key] = _coerce(key, value)
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    try:
        tc = train_config(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if cfg["width"] * cfg["height"] != tc.generator_config.image_len:
        raise ConfigError(
            f"width * height = {cfg['width'] * cfg['height']} but n_patches * patch_len = "
            f"{tc.generator_config.image_len}"
        )
    if cfg["dataset"] not in ("digits", "idx", "cifar10"):
        raise ConfigError(f"key 'dataset' must be digits, idx or cifar10, got {cfg['dataset']!r}")
    if cfg["n_train"] < tc.eval_size:
        raise ConfigError(f"key 'n_train' must be at least eval_size = {tc.eval_size}")
    seeds = cfg["seeds"]
    if not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds):
        raise ConfigError("key 'seeds' must list non-negative integers")
    if len(set(seeds)) != len(seeds):
        dup = next(s for s in seeds if seeds.count(s) > 1)
        raise ConfigError(f"key 'seeds' lists seed {dup} more than once")
    if not cfg["depths"] or not all(isinstance(d, int) and 1 <= d <= 64 for d in cfg["depths"]):
        raise ConfigError("key 'depths' must list integers in [1, 64]")
    if len(set(cfg["depths"])) != len(cfg["depths"]):
        raise ConfigError("key 'depths' lists a depth more than once")


def generator_config(cfg: dict) -> GeneratorConfig:
    basis = BasisConfig(cfg["basis"], cfg["n_basis"], cfg["n_grid_intervals"], cfg["degree"])
    return GeneratorConfig(
        n_qubits=cfg["n_qubits"],
        n_ancilla=cfg["n_ancilla"],
        depth=cfg["depth"],
        n_layers=cfg["n_layers"],
        n_patches=cfg["n_patches"],
        patch_len=cfg["patch_len"],
        basis=basis,
        readout=cfg["readout"],
    )


def train_config(cfg: dict) -> TrainConfig:
    fields = {k: cfg[k] for k in SECTIONS["train"]}
    return TrainConfig(**fields, generator_config=generator_config(cfg))


def load_dataset(cfg: dict) -> Dataset:
    """Training images in index order, filtered, truncated and resized per ``cfg``."""
    kind = cfg["dataset"]
    if kind == "digits":
        ds = load_digits8()
    elif kind == "idx":
        if not cfg["images"] or not cfg["labels"]:
            raise ConfigError("dataset 'idx' needs keys 'images' and 'labels'")
        ds = load_mnist_idx(cfg["images"], cfg["labels"])
    else:
        batches = cfg["cifar_batches"]
        if not batches:
            raise ConfigError("dataset 'cifar10' needs key 'cifar_batches'")
        parts = [load_cifar10_gray(p) for p in batches]
        ds = Dataset(
            np.concatenate([p.images for p in parts]), np.concatenate([p.labels for p in parts]), 32, 32
        )
    ds = take_prefix(ds, cfg["n_train"], cfg["label"])
    return resize_dataset(ds, cfg["width"], cfg["height"])
