"""Run configuration: one JSON document, schema-checked, overridable by CLI
flags, echoed verbatim into every run directory."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .align import DpoConfig
from .core import SchemaError
from .env import EnvConfig
from .generator import SamplingParams
from .loop import REF_INITIAL, REF_SNAPSHOT, LoopConfig
from .rectune import DistillConfig, RecTuneConfig

_BOOL = "bool"
_INT = "int"
_FLOAT = "float"
_STR = "str"
_OPT_STR = "str-or-null"

_SCHEMA = {
    "name": _STR,
    "seed": _INT,
    "data_dir": _OPT_STR,
    "env": {
        "n_users": _INT,
        "n_items": _INT,
        "n_interactions_per_user": _INT,
        "k": _INT,
        "l": _INT,
        "click_sharpness": _FLOAT,
        "click_bias": _FLOAT,
        "feature_noise": _FLOAT,
        "exposure_sharpness": _FLOAT,
        "exposure_explore": _FLOAT,
    },
    "sampling": {"n": _INT, "t": _FLOAT, "top_p": _FLOAT},
    "dpo": {"beta_dpo": _FLOAT, "lr_alpha": _FLOAT, "epochs_per_iteration": _INT},
    "rectune": {"lr_beta": _FLOAT, "epochs": _INT},
    "distill": {"enabled": _BOOL, "fraction": _FLOAT, "lr": _FLOAT, "epochs": _INT},
    "loop": {"iterations": _INT, "reference_mode": _STR, "align_enabled": _BOOL},
    "ctr": {"lr": _FLOAT, "epochs": _INT},
}

DEFAULTS = {
    "name": "run",
    "seed": 42,
    "data_dir": None,
    "env": {
        "n_users": 200,
        "n_items": 500,
        "n_interactions_per_user": 30,
        "k": 16,
        "l": 4,
        "click_sharpness": 8.0,
        "click_bias": -2.0,
        "feature_noise": 0.05,
        "exposure_sharpness": 50.0,
        "exposure_explore": 0.6,
    },
    "sampling": {"n": 10, "t": 1.0, "top_p": 0.9},
    "dpo": {"beta_dpo": 1.0, "lr_alpha": 1e-4, "epochs_per_iteration": 1},
    "rectune": {"lr_beta": 0.01, "epochs": 1},
    "distill": {"enabled": True, "fraction": 0.05, "lr": 1.0, "epochs": 300},
    "loop": {
        "iterations": 3,
        "reference_mode": REF_SNAPSHOT,
        "align_enabled": True,
    },
    "ctr": {"lr": 0.3, "epochs": 8},
}


def _check_type(value, expected: str, where: str):
    if expected == _BOOL:
        if not isinstance(value, bool):
            raise SchemaError(f"config key '{where}' must be a boolean")
        return value
    if expected == _INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise SchemaError(f"config key '{where}' must be an integer")
        return value
    if expected == _FLOAT:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError(f"config key '{where}' must be a number")
        return float(value)
    if expected == _STR:
        if not isinstance(value, str):
            raise SchemaError(f"config key '{where}' must be a string")
        return value
    if expected == _OPT_STR:
        if value is not None and not isinstance(value, str):
            raise SchemaError(f"config key '{where}' must be a string or null")
        return value
    raise AssertionError(expected)


def merge_with_defaults(raw: dict) -> dict:
    """Validate a raw config dict against the schema and fill defaults.

    Unknown keys are rejected by their dotted path.
    """
    if not isinstance(raw, dict):
        raise SchemaError("config document must be a JSON object")

    def walk(schema, defaults, given, prefix):
        out = {}
        for key, value in given.items():
            if key not in schema:
                raise SchemaError(f"unknown config key '{prefix}{key}'")
        for key, spec in schema.items():
            where = f"{prefix}{key}"
            if isinstance(spec, dict):
                sub = given.get(key, {})
                if not isinstance(sub, dict):
                    raise SchemaError(f"config key '{where}' must be an object")
                out[key] = walk(spec, defaults[key], sub, where + ".")
            elif key in given:
                out[key] = _check_type(given[key], spec, where)
            else:
                out[key] = defaults[key]
        return out

    return walk(_SCHEMA, DEFAULTS, raw, "")


def load_config_file(path) -> dict:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    return merge_with_defaults(raw)


@dataclass(frozen=True)
class RunConfig:
    name: str
    seed: int
    data_dir: str | None
    env: EnvConfig
    loop: LoopConfig
    ctr_lr: float
    ctr_epochs: int


def build_run_config(doc: dict) -> RunConfig:
    """Typed view of a merged config document."""
    seed = doc["seed"]
    if seed < 0:
        raise SchemaError("config key 'seed' must be nonnegative")
    env = EnvConfig(seed=seed, **doc["env"])
    distill = None
    if doc["distill"]["enabled"]:
        d = dict(doc["distill"])
        d.pop("enabled")
        distill = DistillConfig(**d)
    mode = doc["loop"]["reference_mode"]
    if mode not in (REF_SNAPSHOT, REF_INITIAL):
        raise SchemaError(
            f"config key 'loop.reference_mode' must be {REF_SNAPSHOT!r} or {REF_INITIAL!r}")
    loop = LoopConfig(
        iterations=doc["loop"]["iterations"],
        cot_len=env.l,
        sampling=SamplingParams(**doc["sampling"]),
        dpo=DpoConfig(**doc["dpo"]),
        rectune=RecTuneConfig(**doc["rectune"]),
        distill=distill,
        reference_mode=mode,
        align_enabled=doc["loop"]["align_enabled"],
        seed=seed,
    )
    return RunConfig(
        name=doc["name"],
        seed=seed,
        data_dir=doc["data_dir"],
        env=env,
        loop=loop,
        ctr_lr=doc["ctr"]["lr"],
        ctr_epochs=doc["ctr"]["epochs"],
    )


def dump_config(doc: dict, path) -> None:
    with open(Path(path), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
