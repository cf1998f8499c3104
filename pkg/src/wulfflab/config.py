"""Run configuration: strict versioned JSON validated before any computation."""

import copy
import hashlib
import json

import numpy as np
from jsonschema import Draft202012Validator

from .errors import DomainError

CONFIG_VERSION = 1
SUBCOMMANDS = ("wulff", "minimize", "sweep", "modulus", "graphpde", "align", "report")

_spec = {"type": "object", "additionalProperties": False, "required": ["kind"],
         "properties": {"kind": {"type": "string"}, "params": {"type": "object"}}}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "subcommand"],
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "subcommand": {"enum": list(SUBCOMMANDS)},
        "tension": _spec,
        "potential": _spec,
        "dim": {"enum": [2, 3]},
        "mass": {"type": "number", "exclusiveMinimum": 0},
        "masses": {"oneOf": [{"type": "string", "pattern": r"^[^:]+:[^:]+:\d+$"},
                             {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1}]},
        "resolution": {"oneOf": [{"type": "integer", "minimum": 8},
                                 {"type": "array", "items": {"type": "integer", "minimum": 8},
                                  "minItems": 2, "maxItems": 2}]},
        "starts": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "seed": {"type": "integer", "minimum": 0},
        "tolerances": {
            "type": "object", "additionalProperties": False,
            "properties": {"residual_tol": {"type": "number", "exclusiveMinimum": 0},
                           "defect_tol": {"type": "number", "exclusiveMinimum": 0},
                           "agreement_tol": {"type": "number", "exclusiveMinimum": 0},
                           "max_iters": {"type": "integer", "minimum": 1}}},
        "epsilon": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "budget": {"type": "integer", "minimum": 1},
        "case": {"enum": ["manufactured-paraboloid", "manufactured-ruled", "cap"]},
        "h": {"type": "number", "exclusiveMinimum": 0},
        "levels": {"type": "integer", "minimum": 1, "maximum": 6},
        "mu": {"type": "number"},
        "shape_a": {"type": "string"},
        "shape_b": {"type": "string"},
        "group": {"enum": ["translations", "rigid", "rigid+reflections"]},
        "run_dir": {"type": "string"},
        "output_dir": {"type": "string"},
    },
}

DEFAULTS = {
    "tension": {"kind": "euclidean", "params": {}},
    "potential": {"kind": "zero", "params": {}},
    "dim": 3,
    "seed": 0,
    "starts": ["wulff", "ball", "random_3"],
    "tolerances": {"residual_tol": 0.03, "defect_tol": 1e-2, "agreement_tol": 1e-2, "max_iters": 400},
    "epsilon": 0.1,
    "budget": 200,
    "case": "manufactured-paraboloid",
    "h": 1 / 32,
    "levels": 3,
    "group": "rigid+reflections",
    "output_dir": "wulfflab-out",
}


class ConfigError(DomainError):
    """Invalid configuration; ``diagnostics`` holds one message per problem."""

    def __init__(self, diagnostics):
        super().__init__("\n".join(diagnostics))
        self.diagnostics = list(diagnostics)


def _line_of(text, path):
    """Best-effort line number of the JSON key at the end of ``path``."""
    if not text or not path:
        return None
    key = f'"{path[-1]}"'
    for i, line in enumerate(text.splitlines(), 1):
        if key in line:
            return i
    return None


def _key_line(text, key):
    for i, line in enumerate((text or "").splitlines(), 1):
        if f'"{key}"' in line:
            return i
    return None


def validate(data, text=None, source="config"):
    """Raise ConfigError listing every schema violation with its line if known."""
    errors = sorted(Draft202012Validator(SCHEMA).iter_errors(data), key=lambda e: list(map(str, e.path)))
    if not errors:
        return
    out = []
    for err in errors:
        path = list(err.path)
        line = None
        if err.validator == "additionalProperties":
            extra = [k for k in err.instance if k not in err.schema.get("properties", {})]
            line = _key_line(text, extra[0]) if extra else None
        else:
            line = _line_of(text, path)
        where = f"{source}:{line}" if line else source
        loc = "/".join(map(str, path)) or "<root>"
        out.append(f"{where}: {loc}: {err.message}")
    raise ConfigError(out)


def parse_masses(spec):
    """A list of masses, or ``"a:b:k"`` for k geometrically spaced masses from a to b."""
    if isinstance(spec, str):
        try:
            a, b, k = spec.split(":")
            a, b, k = float(a), float(b), int(k)
        except ValueError as exc:
            raise DomainError(f"bad mass range {spec!r}; expected a:b:k") from exc
        if not (a > 0 and b > a and k >= 2):
            raise DomainError(f"bad mass range {spec!r}; need 0 < a < b and k >= 2")
        return [float(x) for x in np.geomspace(a, b, k)]
    return [float(x) for x in spec]


def parse_config(source, text=None, name="config"):
    """Validate a dict or JSON text and fill defaults; returns a new dict."""
    if isinstance(source, str):
        text = source
        try:
            data = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{name}:{exc.lineno}:{exc.colno}: {exc.msg}"]) from exc
    else:
        data = copy.deepcopy(source)
    validate(data, text, name)
    cfg = copy.deepcopy(DEFAULTS)
    for key, value in data.items():
        if key == "tolerances":
            cfg["tolerances"].update(value)
        else:
            cfg[key] = value
    cfg["tension"].setdefault("params", {})
    cfg["potential"].setdefault("params", {})
    return cfg


def load_config(path):
    with open(path) as fh:
        text = fh.read()
    return parse_config(text, name=str(path))


def serialize_config(cfg):
    """Canonical JSON text (sorted keys) of a configuration."""
    return json.dumps(cfg, sort_keys=True, indent=2) + "\n"


def config_hash(cfg):
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()
