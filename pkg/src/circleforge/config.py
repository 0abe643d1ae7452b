"""Scenario configuration: JSON schema, defaults, dotted overrides and hashing."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Any, Mapping, Sequence

import jsonschema

_INT = {"type": "integer"}
_POS = {"type": "integer", "minimum": 1}
_NUM = {"type": "number"}

SET_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["naturals", "primes", "ellipsephic", "smooth", "explicit", "file"]},
        "p": _POS,
        "digits": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "Q": _POS,
        "pairs": {"type": "array", "items": {"type": "array", "minItems": 2, "maxItems": 2}},
        "path": {"type": "string"},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "circleforge scenario",
    "type": "object",
    "properties": {
        "set": SET_SCHEMA,
        "X": {"type": "integer", "minimum": 2},
        "k": _POS,
        "phi": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "array", "items": _INT, "minItems": 2, "maxItems": 2},
        },
        "s": _POS,
        "u": {"type": "integer", "minimum": 0},
        "t": {"type": "array", "items": _POS},
        "n": {
            "type": "object",
            "properties": {
                "values": {"type": "array", "items": _POS},
                "min": _POS,
                "max": _POS,
                "count": _POS,
            },
            "additionalProperties": False,
        },
        "nMax": _POS,
        "mode": {"enum": ["MeanValue", "Waring", "Mixed"]},
        "countMode": {"enum": ["exact", "fast"]},
        "qMax": _POS,
        "xGrid": {"type": "array", "items": {"type": "integer", "minimum": 2}},
        "conditionPairs": {"type": "array", "items": {"type": "array", "items": _POS, "minItems": 2, "maxItems": 2}},
        "Q": {"type": "number", "exclusiveMinimum": 0},
        "QList": {"type": "array", "items": _POS},
        "hMax": {"type": "integer", "minimum": 0},
        "pMax": {"type": "integer", "minimum": 2},
        "T": {"type": "array", "items": {"type": "number", "minimum": 1}},
        "samples": _POS,
        "psi": {"enum": ["star", "li"]},
        "tau": {"type": "number", "exclusiveMinimum": 1},
        "integralQ": {"type": "number", "exclusiveMinimum": 0},
        "series": {"type": ["number", "null"]},
        "integral": {"type": ["number", "null"]},
        "window": _POS,
        "checkWindows": _POS,
        "tolerances": {
            "type": "object",
            "properties": {"quad": {"type": "number", "exclusiveMinimum": 0}, "outer": {"type": "number", "exclusiveMinimum": 0}},
            "additionalProperties": False,
        },
        "applicability": {
            "type": "object",
            "properties": {
                "theorem": {"type": "string"},
                "measurements": {"type": "object"},
            },
            "additionalProperties": False,
        },
        "Y": {
            "type": "object",
            "properties": {"QD": _NUM, "QW": _NUM, "E": _NUM, "r": _POS, "variant": {"enum": ["Y", "Y2", "Ymv"]}},
            "additionalProperties": False,
        },
        "seed": {"type": "integer", "minimum": 0},
        "output": {"type": "string"},
    },
    "additionalProperties": False,
}

DEFAULTS: dict[str, Any] = {
    "set": {"kind": "naturals"},
    "X": 100,
    "k": 2,
    "s": 2,
    "u": 0,
    "t": [2],
    "mode": "Waring",
    "countMode": "exact",
    "qMax": 10,
    "Q": 200,
    "QList": [4, 8, 16, 32, 64],
    "hMax": 6,
    "pMax": 50,
    "T": [4, 8, 16, 32],
    "samples": 1 << 18,
    "psi": "star",
    "tau": 3.0,
    "window": 10,
    "checkWindows": 3,
    "tolerances": {"quad": 1e-10, "outer": 1e-8},
    "seed": 0,
    "output": "out",
}


class ConfigError(ValueError):
    """Schema violation or malformed override."""


def validate(cfg: Mapping) -> None:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {exc.message}") from None


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> None:
    """Apply ``a.b.c=VALUE`` where VALUE is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not KEY=VAL")
    key, val = assignment.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"empty key in override {assignment!r}")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = _parse_value(val)


def load(path: str | Path | None, overrides: Sequence[str] = ()) -> dict:
    """Read the config file (if any), apply overrides, validate and fill defaults."""
    cfg: dict = {}
    if path is not None:
        try:
            cfg = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config root must be an object")
    for o in overrides:
        apply_override(cfg, o)
    validate(cfg)
    merged = copy.deepcopy(DEFAULTS)
    for key, val in cfg.items():
        if isinstance(val, dict) and isinstance(merged.get(key), dict) and key != "set":
            merged[key] = {**merged[key], **val}
        else:
            merged[key] = val
    validate(merged)
    return merged


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(cfg: Mapping) -> str:
    return hashlib.sha256(canonical(cfg).encode("ascii")).hexdigest()
