"""Versioned JSON checkpoints for generator and validator parameters.

The format is shape metadata plus row-major values behind a magic header;
serialization is byte-deterministic (sorted keys, repr floats), so equal
parameters always produce equal files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import CheckpointError
from .generator import GeneratorParams
from .validator import ValidatorParams

MAGIC = "recloop-checkpoint"
VERSION = 1


def _dump(payload: dict, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def _load(path, kind: str) -> dict:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"missing checkpoint: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if payload.get("magic") != MAGIC:
        raise CheckpointError(f"{path}: bad magic header")
    if payload.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported version {payload.get('version')}")
    if payload.get("kind") != kind:
        raise CheckpointError(f"{path}: expected kind {kind!r}, got {payload.get('kind')!r}")
    return payload


def save_generator(params: GeneratorParams, path) -> None:
    _dump({
        "magic": MAGIC,
        "version": VERSION,
        "kind": "generator",
        "k": params.k,
        "l": params.l,
        "w": [[float(v) for v in row] for row in params.w],
        "bias": [float(v) for v in params.bias],
    }, path)


def load_generator(path) -> GeneratorParams:
    payload = _load(path, "generator")
    k, l = int(payload["k"]), int(payload["l"])
    w = np.array(payload["w"], dtype=float)
    bias = np.array(payload["bias"], dtype=float)
    if w.shape != (k, 2 * k + l) or bias.shape != (k,):
        raise CheckpointError(f"{path}: value shapes do not match metadata")
    return GeneratorParams(k=k, l=l, w=w, bias=bias)


def save_validator(params: ValidatorParams, path) -> None:
    _dump({
        "magic": MAGIC,
        "version": VERSION,
        "kind": "validator",
        "k": params.k,
        "w_yes": [float(v) for v in params.w_yes],
        "w_no": [float(v) for v in params.w_no],
        "b_yes": float(params.b_yes),
        "b_no": float(params.b_no),
    }, path)


def load_validator(path) -> ValidatorParams:
    payload = _load(path, "validator")
    k = int(payload["k"])
    w_yes = np.array(payload["w_yes"], dtype=float)
    w_no = np.array(payload["w_no"], dtype=float)
    if w_yes.shape != (4 * k,) or w_no.shape != (4 * k,):
        raise CheckpointError(f"{path}: value shapes do not match metadata")
    return ValidatorParams(k=k, w_yes=w_yes, w_no=w_no,
                           b_yes=float(payload["b_yes"]), b_no=float(payload["b_no"]))
