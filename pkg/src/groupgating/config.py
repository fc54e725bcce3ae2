"""Experiment configuration: a JSON document validated before any work runs.

Every object in the schema rejects unknown keys. Missing optional entries
are filled from ``DEFAULTS`` by :func:`load_config`, so a config file only
needs the keys it changes.
"""

import copy
import json

import jsonschema

from .classifier import L2_GRID
from .datagen import TASK_DEFAULTS

_pos_int = {"type": "integer", "minimum": 1}
_nonneg = {"type": "number", "minimum": 0}

_TRAIN = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "learning_rate": {"type": "number", "exclusiveMinimum": 0},
        "minibatch_size": _pos_int,
        "epochs": {"type": "integer", "minimum": 0},
        "noise": {"enum": ["none", "gaussian", "mask"]},
        "noise_level": _nonneg,
        "weight_init_std": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "patience": {"type": ["integer", "null"], "minimum": 1},
        "normalize_filters": {"type": "boolean"},
    },
}

_MODEL = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["diagonal", "grouped", "asym_grouped", "topographic", "square_pooling"]},
        "num_factors": _pos_int,
        "num_hidden": _pos_int,
        "group_size": _pos_int,
        "grid": {"type": "array", "items": _pos_int, "minItems": 2, "maxItems": 2},
        "neighborhood": _pos_int,
        "wraparound": {"type": "boolean"},
    },
}

SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "ExperimentConfig",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "task": {"enum": sorted(TASK_DEFAULTS)},
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "patch_size": {"type": "integer", "minimum": 2},
                "counts": {"type": "array", "items": _pos_int,
                           "minItems": 3, "maxItems": 3},
                "seed": {"type": "integer", "minimum": 0},
                "task_params": {"type": "object"},
            },
        },
        "model": _MODEL,
        "train": _TRAIN,
        "learning_rates": {"type": ["array", "null"], "items": {"type": "number", "exclusiveMinimum": 0},
                           "minItems": 1},
        "classifier": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "l2_grid": {"type": "array", "items": _nonneg, "minItems": 1},
                "max_iter": _pos_int,
            },
        },
        "table1": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tasks": {"type": "array", "items": {"enum": ["translation", "rotation"]},
                          "minItems": 1},
                "filters": {"type": "array", "items": _pos_int, "minItems": 1},
                "equivalent_filters": {"type": ["array", "null"], "items": _pos_int},
                "equivalence": {"enum": ["total", "table"]},
                "group_size": _pos_int,
            },
        },
        "curves": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "enabled": {"type": "boolean"},
                "epoch_scaling": {"enum": ["fixed", "equal_updates"]},
                "train_sizes": {"type": "array", "items": _pos_int, "minItems": 1},
                "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0},
                          "minItems": 1},
                "gated": _MODEL,
                "square_pooling": _MODEL,
            },
        },
        "output_dir": {"type": "string"},
    },
}

DEFAULTS = {
    "task": "translation",
    "data": {"patch_size": 13, "counts": [20000, 2000, 5000], "seed": 1, "task_params": {}},
    "model": {"kind": "diagonal", "num_factors": 225, "num_hidden": 64, "group_size": 3,
              "grid": [10, 10], "neighborhood": 3, "wraparound": True},
    "train": {"learning_rate": 0.03, "minibatch_size": 100, "epochs": 60, "noise": "none",
              "noise_level": 0.0, "weight_init_std": 0.05, "seed": 0, "patience": None,
              "normalize_filters": False},
    "learning_rates": None,
    "classifier": {"l2_grid": list(L2_GRID), "max_iter": 1000},
    "table1": {"tasks": ["rotation", "translation"], "filters": [225, 441],
               "equivalent_filters": None, "equivalence": "table", "group_size": 3},
    "curves": {"enabled": True, "epoch_scaling": "equal_updates",
               "train_sizes": [2000, 5000, 20000], "seeds": [0, 1, 2],
               "gated": {"kind": "diagonal", "num_factors": 225},
               "square_pooling": {"kind": "square_pooling", "num_factors": 225}},
    "output_dir": "out",
}


class ConfigError(ValueError):
    pass


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "task_params":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(doc):
    """Raise :class:`ConfigError` naming the offending path if ``doc`` breaks the schema."""
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    table = doc.get("table1", {})
    eq = table.get("equivalent_filters")
    if eq is not None and len(eq) != len(table.get("filters", DEFAULTS["table1"]["filters"])):
        raise ConfigError("config error at table1/equivalent_filters: "
                          "needs one entry per diagonal filter count")


def resolve(doc):
    """Validate ``doc`` and fill in defaults."""
    validate(doc)
    cfg = _merge(DEFAULTS, doc)
    validate(cfg)
    return cfg


def load_config(path=None, seed=None):
    doc = {}
    if path is not None:
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    cfg = resolve(doc)
    if seed is not None:
        cfg["data"]["seed"] = seed
        cfg["train"]["seed"] = seed
    return cfg


def model_params(model_cfg, defaults=None):
    """Model section merged over the top-level model defaults."""
    return _merge(defaults or DEFAULTS["model"], model_cfg)
