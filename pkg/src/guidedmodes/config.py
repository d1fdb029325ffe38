"""Run configuration: YAML file, JSON-schema validation and defaults.

Every section is optional except ``profile``.  Unknown keys anywhere are
rejected.  See ``configs/`` for commented examples.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import yaml

from .errors import ConfigError
from .medium import DielectricProfile, Rect

__all__ = ["SCHEMA", "RunConfig", "load_config", "parse_config"]

_num = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}
_rect = {
    "type": "object",
    "additionalProperties": False,
    "required": ["x0", "x1", "y0", "y1", "value"],
    "properties": {k: _num for k in ("x0", "x1", "y0", "y1", "value")},
}
_pair = {"type": "array", "items": _pos_int, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["profile"],
    "properties": {
        "profile": {
            "type": "object",
            "additionalProperties": False,
            "required": ["background"],
            "properties": {
                "name": {"type": "string"},
                "background": _num,
                "inclusions0": {"type": "array", "items": _rect},
                "inclusions1": {"type": "array", "items": _rect},
                "alpha": {"type": "number", "minimum": 0},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kx": _num,
                "N": {"oneOf": [_pos_int, _pair]},
                "S": _pos_int,
                "J": {"type": "integer", "minimum": 33},
                "T": _pos_int,
                "kquad": {"type": "integer", "minimum": 4},
                "gap_index": {"type": "integer", "minimum": 0},
                "defect_degree": {"oneOf": [{"type": "integer", "minimum": 0}, _pair]},
                "R": {"type": "number", "exclusiveMinimum": 0},
                "lambda_grid": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "n": _pos_int,
                        "edge": {"enum": ["upper", "lower", "auto"]},
                        "ratio": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                        "values": {"type": "array", "items": _num},
                    },
                },
            },
        },
        "dispersion": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"kx": {"type": "array", "items": _num, "minItems": 1}},
        },
        "continuation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mu": {"type": "array", "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}},
                "test_degree": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2,
                                "maxItems": 2},
            },
        },
        "supercell": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "M": {"type": "integer", "minimum": 4},
                "Ng": {"type": "integer", "minimum": 32},
                "loc_threshold": {"type": "number", "minimum": 0, "maximum": 1},
                "richardson": {"type": "boolean"},
                "deltas_rel": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
            },
        },
        "seed": {"type": "integer", "minimum": 0},
        "output": {"type": "string"},
    },
}


@dataclass
class RunConfig:
    profile: DielectricProfile
    kx: float = 0.0
    N: tuple[int, int] = (1, 32)
    S: int = 12
    J: int = 65
    T: int = 6
    kquad: int = 16
    gap_index: int = 0
    defect_degree: tuple[int, int] = (8, 8)
    R: float = 0.3
    grid_n: int = 50
    grid_edge: str = "auto"
    grid_ratio: float = 2.0**-0.5
    grid_values: list | None = None
    dispersion_kx: list = field(default_factory=lambda: [0.0])
    mu: list = field(default_factory=lambda: [[0.095534, 0.029552], [0.062161, 0.078333], [0.007074, 0.099749],
                                              [-0.050485, 0.086321], [-0.090407, 0.042738]])
    test_degree: tuple[int, int] = (1, 6)
    M: int = 16
    Ng: int = 32
    loc_threshold: float = 0.5
    richardson: bool = True
    deltas_rel: list = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    seed: int = 0
    output: str | None = None
    digest: str = ""


def _pair_of(v) -> tuple[int, int]:
    return (int(v), int(v)) if isinstance(v, int) else (int(v[0]), int(v[1]))


def parse_config(data, digest: str = "") -> RunConfig:
    """Validate a mapping against :data:`SCHEMA` and build the run configuration."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    pr = data["profile"]
    profile = DielectricProfile(
        float(pr["background"]),
        tuple(Rect.from_mapping(r) for r in pr.get("inclusions0", [])),
        tuple(Rect.from_mapping(r) for r in pr.get("inclusions1", [])),
        float(pr.get("alpha", 1.0)),
        pr.get("name", ""),
    )
    cfg = RunConfig(profile, digest=digest)
    sv = data.get("solver", {})
    for key in ("kx", "S", "J", "T", "kquad", "gap_index", "R"):
        if key in sv:
            setattr(cfg, key, sv[key])
    if "N" in sv:
        cfg.N = _pair_of(sv["N"])
    if "defect_degree" in sv:
        cfg.defect_degree = _pair_of(sv["defect_degree"])
    if cfg.J % 2 == 0:
        raise ConfigError("solver.J must be odd")
    if not -3.141592653589793 <= cfg.kx <= 3.141592653589793:
        raise ConfigError("solver.kx must lie in [-pi, pi]")
    lg = sv.get("lambda_grid", {})
    cfg.grid_n = lg.get("n", cfg.grid_n)
    cfg.grid_edge = lg.get("edge", cfg.grid_edge)
    cfg.grid_ratio = lg.get("ratio", cfg.grid_ratio)
    cfg.grid_values = lg.get("values")
    if "dispersion" in data:
        cfg.dispersion_kx = list(data["dispersion"].get("kx", cfg.dispersion_kx))
    ct = data.get("continuation", {})
    cfg.mu = ct.get("mu", cfg.mu)
    cfg.test_degree = tuple(ct.get("test_degree", cfg.test_degree))
    sc = data.get("supercell", {})
    for key in ("M", "Ng", "loc_threshold", "richardson", "deltas_rel"):
        if key in sc:
            setattr(cfg, key, sc[key])
    cfg.seed = data.get("seed", 0)
    cfg.output = data.get("output")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    return parse_config(data, hashlib.sha256(raw).hexdigest())
