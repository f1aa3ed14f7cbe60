"""Run configuration: declarative TOML/JSON files, presets and overrides.

A configuration is a nested mapping with the blocks ``geometry``,
``reference``, ``scenario``, ``numerics`` and ``coupling`` plus the
top-level keys ``mode`` and ``out``.  Missing keys take the defaults in
:data:`DEFAULTS`.  Overrides use dotted keys, e.g.
``numerics.dt=1e-4`` or ``mode=fine``; values are parsed as JSON when
possible and kept as strings otherwise.
"""

from __future__ import annotations

import copy
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .geometry import UnitCellSpec
from .physics import ReferenceValues, ScenarioConfig

MODES = ("fine", "upscaled", "hybrid-taylor", "hybrid-series", "closure", "bench")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


DEFAULTS: dict = {
    "mode": "hybrid-taylor",
    "out": "runs/default",
    "geometry": {"r_c": 0.009, "r_w": 0.003, "d_cc": 0.009, "d1": 0.001, "d2": 0.002, "N_x": 20, "N_y": 1},
    "reference": {},
    "scenario": {
        "x_burn": 0.2125,
        "x_R": -0.3125,
        "gamma": 180.0,
        "alpha1": 0.01,
        "q_pw": 1.0,
        "R_ratio": 10.0,
        "tanh_steepness": 100.0,
        "Pi_base_ratio": 0.01,
    },
    "numerics": {
        "dt": 3.15e-5,
        "t_final": 0.2,
        "n_steps": None,
        "h_fine": 1.5e-3,
        "h_up": 1.0e-2,
        "h_cell": 1.0 / 40.0,
        "n_seg": None,
        "closure_n_seg": 64,
        "eps_tol": 1e-4,
        "max_iter": 25,
        "n_iter": None,
        "snapshots": [0.02, 0.2],
        "vtk": True,
        "coarsen": 1.0,
        "initial_T": 0.0,
    },
    "coupling": {"x_hc": -0.0875, "x_dist": None, "snap": "nearest", "fine_side": "left"},
    "bench": {"fractions": [0.025, 0.1, 0.2, 0.4, 0.8], "schemes": ["taylor", "series"]},
    "compare": {"epsilon": None},
}

PRESETS: dict = {
    "paper-accuracy": {
        "geometry": {"N_x": 20, "N_y": 1},
        "numerics": {"dt": 3.15e-5, "t_final": 0.2, "n_steps": None, "h_fine": 7.63e-4, "h_up": 1.0e-2,
                     "n_iter": None, "snapshots": [0.02, 0.2]},
        "coupling": {"x_hc": -0.0875, "x_dist": None, "snap": "nearest"},
        "scenario": {"x_R": -0.3125, "x_burn": 0.2125},
    },
    "paper-efficiency": {
        "mode": "bench",
        "geometry": {"N_x": 80, "N_y": 1},
        "numerics": {"dt": 3.15e-5, "n_steps": 50, "h_fine": 2.5e-4, "h_up": 1.0e-2, "n_iter": 2,
                     "snapshots": [], "vtk": False},
        "scenario": {"x_R": -0.3125, "x_burn": 0.2125},
        "bench": {"fractions": [0.025, 0.1, 0.2, 0.4, 0.8]},
    },
}


def deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (extra or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_file(path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return json.loads(text)
    if path.suffix.lower() == ".toml":
        return tomllib.loads(text)
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError:
        return json.loads(text)


def parse_override(item: str):
    """``"a.b=value"`` -> ``(["a", "b"], value)``."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    keys = [k for k in key.strip().split(".") if k]
    if not keys:
        raise ConfigError(f"override {item!r} has an empty key")
    raw = raw.strip()
    if raw.lower() in ("none", "null"):
        return keys, None
    try:
        return keys, json.loads(raw)
    except json.JSONDecodeError:
        return keys, raw


def apply_overrides(cfg: dict, overrides) -> dict:
    cfg = copy.deepcopy(cfg)
    for item in overrides or []:
        keys, value = parse_override(item)
        node = cfg
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r} descends into a non-table")
        node[keys[-1]] = value
    return cfg


@dataclass
class RunConfig:
    """Validated configuration; ``raw`` keeps the fully resolved mapping."""

    raw: dict

    @property
    def mode(self) -> str:
        return self.raw["mode"]

    @property
    def out(self) -> Path:
        return Path(self.raw["out"])

    @property
    def geometry(self) -> dict:
        return self.raw["geometry"]

    @property
    def numerics(self) -> dict:
        return self.raw["numerics"]

    @property
    def coupling(self) -> dict:
        return self.raw["coupling"]

    @property
    def scenario_block(self) -> dict:
        return self.raw["scenario"]

    def unit_cell_spec(self) -> UnitCellSpec:
        g = self.geometry
        return UnitCellSpec(r_c=g["r_c"], r_w=g["r_w"], d_cc=g["d_cc"], d1=g["d1"], d2=g["d2"])

    def reference_values(self) -> ReferenceValues:
        fields = dict(self.raw["reference"])
        fields.setdefault("Pi_base_ratio", self.scenario_block.get("Pi_base_ratio", 0.01))
        try:
            return ReferenceValues(**fields)
        except TypeError as exc:
            raise ConfigError(f"reference block: {exc}") from exc

    def scenario(self) -> ScenarioConfig:
        s = {k: v for k, v in self.scenario_block.items() if k != "Pi_base_ratio"}
        try:
            return ScenarioConfig(**s)
        except TypeError as exc:
            raise ConfigError(f"scenario block: {exc}") from exc

    @property
    def h_fine(self) -> float:
        return float(self.numerics["h_fine"]) * float(self.numerics.get("coarsen", 1.0))

    @property
    def n_steps(self) -> int:
        n = self.numerics
        if n.get("n_steps") is not None:
            return int(n["n_steps"])
        return int(math.ceil(float(n["t_final"]) / float(n["dt"]) - 1e-9))

    @property
    def t_final(self) -> float:
        return self.n_steps * float(self.numerics["dt"])

    def snapshot_steps(self) -> dict:
        """Step index for each configured snapshot time (nearest step, clipped to the run)."""
        dt = float(self.numerics["dt"])
        out = {}
        for t in self.numerics.get("snapshots") or []:
            k = int(round(float(t) / dt))
            if 0 < k <= self.n_steps:
                out[k] = float(t)
        return out

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


def validate(cfg: dict) -> RunConfig:
    if cfg.get("mode") not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {cfg.get('mode')!r}")
    for block in ("geometry", "reference", "scenario", "numerics", "coupling"):
        if not isinstance(cfg.get(block), dict):
            raise ConfigError(f"missing block {block!r}")
    unknown = set(cfg["numerics"]) - set(DEFAULTS["numerics"])
    if unknown:
        raise ConfigError(f"unknown numerics keys: {sorted(unknown)}")
    n = cfg["numerics"]
    if not (isinstance(n["dt"], (int, float)) and n["dt"] > 0):
        raise ConfigError(f"numerics.dt must be positive, got {n['dt']!r}")
    if n.get("n_steps") is None:
        if not (isinstance(n.get("t_final"), (int, float)) and n["t_final"] > 0):
            raise ConfigError(f"numerics.t_final must be positive, got {n.get('t_final')!r}")
    elif int(n["n_steps"]) < 1:
        raise ConfigError("numerics.n_steps must be >= 1")
    for key in ("h_fine", "h_up", "h_cell", "coarsen"):
        if not (isinstance(n[key], (int, float)) and n[key] > 0):
            raise ConfigError(f"numerics.{key} must be positive, got {n[key]!r}")
    if n.get("n_iter") is not None and int(n["n_iter"]) < 1:
        raise ConfigError("numerics.n_iter must be >= 1")
    g = cfg["geometry"]
    for key in ("N_x", "N_y"):
        if int(g[key]) != g[key] or g[key] < 1:
            raise ConfigError(f"geometry.{key} must be a positive integer")
    c = cfg["coupling"]
    if c.get("snap") not in ("nearest", "up", "down"):
        raise ConfigError(f"coupling.snap must be nearest, up or down, got {c.get('snap')!r}")
    if c.get("fine_side", "left") != "left":
        raise ConfigError("only fine_side = 'left' is supported (fine subdomain on the low-x side)")
    if cfg["mode"].startswith("hybrid") and c.get("x_hc") is None and c.get("x_dist") is None:
        raise ConfigError("hybrid modes need coupling.x_hc or coupling.x_dist")
    if c.get("x_dist") is not None and cfg["scenario"].get("x_R") is None:
        raise ConfigError("coupling.x_dist is measured from scenario.x_R, which is unset")
    return RunConfig(raw=cfg)


def resolve(path=None, preset: str | None = None, overrides=None, out=None, coarsen=None,
            base: dict | None = None) -> RunConfig:
    """Defaults, then preset, then file (or ``base``), then overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        cfg = deep_merge(cfg, PRESETS[preset])
    if path is not None:
        cfg = deep_merge(cfg, load_file(path))
    if base is not None:
        cfg = deep_merge(cfg, base)
    cfg = apply_overrides(cfg, overrides)
    if coarsen is not None:
        cfg["numerics"]["coarsen"] = float(coarsen)
    if out is not None:
        cfg["out"] = str(out)
    return validate(cfg)
