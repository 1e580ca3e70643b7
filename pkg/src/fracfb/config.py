"""Run configuration: defaults, validation and ``--set`` overrides.

A config is a JSON object. Every section has a fixed set of keys with
defaults; unknown keys, wrong types and out-of-range values raise
:class:`ConfigError`. Validation never touches the filesystem beyond reading
the config itself.
"""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

__all__ = ["DEFAULTS", "EXPERIMENTS", "ConfigError", "apply_overrides", "config_hash", "load_config", "validate"]

EXPERIMENTS = ("minimize", "perimeter", "curvature", "residual", "density", "growth", "instability")


class ConfigError(ValueError):
    pass


DEFAULTS: dict = {
    "experiment": "perimeter",
    "sigma": 0.5,
    "seed": 0,
    "output_dir": "fracfb_out",
    "workers": 0,
    "grid": {"nx": 256, "box_half_width": 1.0, "upsilon": 0.01},
    "phi": {"kind": "identity", "gamma": 1.0, "k_o": 1.0, "coercive_slope": 1.0, "table_t": [], "table_phi": []},
    "omega": {"shape": "ball", "radius": 0.5, "inner_radius": 0.25, "center": [0.0, 0.0]},
    "set": {"shape": "ball", "radius": 0.25, "center": [0.0, 0.0], "normal": [1.0, 0.0], "offset": 0.0},
    "datum": {"kind": "saddle", "beta": 0.0, "radius": 0.5, "initial_radius": 0.0},
    "pair": {"source": "minimize", "path": ""},
    "minimize": {
        "max_outer": 60,
        "flip_sweeps_per_outer": 2,
        "energy_tol": 1e-9,
        "temperature": 0.0,
        "cooling": 0.7,
        "anneal_steps": 0,
        "relax_u": True,
        "audit_every": 10,
        "checkpoint_every": 0,
        "resume": False,
    },
    "perimeter": {"tail": "conical", "ntheta": 2048},
    "curvature": {"delta_cells": 8.0, "points": []},
    "residual": {"exclude": [], "delta_cells": 8.0},
    "density": {"r_min_cells": 4.0, "r_max": 0.25, "n_radii": 8, "n_centers": 8},
    "growth": {"r_min_cells": 4.0, "r_max": 0.2, "n_radii": 8, "n_centers": 8},
    "instability": {
        "gamma": 1.0,
        "r_small_list": [0.05, 0.025, 0.0125, 0.00625],
        "r_large": 1.0,
        "n": 512,
        "box_factor": 4.0,
        "pinch_width": 0.0625,
        "restarts": 8,
        "large": True,
        "crossover": True,
    },
}

_CHOICES = {
    ("phi", "kind"): ("identity", "power_cap", "table"),
    ("omega", "shape"): ("ball", "box", "annulus"),
    ("set", "shape"): ("ball", "half_plane", "saddle", "box", "complement_ball"),
    ("datum", "kind"): ("saddle", "saddle_plus", "disc", "planar"),
    ("pair", "source"): ("minimize", "datum", "checkpoint"),
    ("perimeter", "tail"): ("conical", "none"),
}


def _type_ok(default, value) -> bool:
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, str):
        return isinstance(value, str)
    if isinstance(default, list):
        return isinstance(value, list)
    return True


def _merge(defaults: dict, given: dict, path: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        where = f"{path}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown key {where!r}")
        d = defaults[key]
        if isinstance(d, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where} must be an object")
            out[key] = _merge(d, value, where + ".")
        else:
            if not _type_ok(d, value):
                raise ConfigError(f"{where} must be of type {type(d).__name__}")
            out[key] = float(value) if isinstance(d, float) else value
    return out


def _require(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


def validate(raw: dict) -> dict:
    """Return the completed config or raise :class:`ConfigError`."""
    _require(isinstance(raw, dict), "config must be a JSON object")
    cfg = _merge(DEFAULTS, raw, "")
    _require(cfg["experiment"] in EXPERIMENTS, f"experiment must be one of {', '.join(EXPERIMENTS)}")
    _require(0.0 < cfg["sigma"] <= 1.0, "sigma must lie in (0, 1]")
    _require(cfg["seed"] >= 0, "seed must be a nonnegative integer")
    _require(cfg["workers"] >= 0, "workers must be nonnegative (0 means automatic)")
    for (sec, key), allowed in _CHOICES.items():
        _require(cfg[sec][key] in allowed, f"{sec}.{key} must be one of {', '.join(allowed)}")
    g = cfg["grid"]
    _require(g["nx"] >= 16 and g["nx"] % 2 == 0, "grid.nx must be even and >= 16")
    _require(g["box_half_width"] > 0, "grid.box_half_width must be positive")
    _require(0 <= g["upsilon"] <= 0.02 * g["box_half_width"], "grid.upsilon must lie in [0, 0.02 * box_half_width]")
    _require(cfg["sigma"] < 1.0 or g["upsilon"] > 0, "grid.upsilon must be positive when sigma = 1")
    om = cfg["omega"]
    _require(om["radius"] > 0, "omega.radius must be positive")
    _require(om["shape"] != "annulus" or 0 < om["inner_radius"] < om["radius"],
             "omega.inner_radius must lie in (0, omega.radius)")
    for sec, key in (("omega", "center"), ("set", "center"), ("set", "normal")):
        v = cfg[sec][key]
        _require(len(v) == 2 and all(isinstance(c, (int, float)) for c in v), f"{sec}.{key} must be two numbers")
    _require(cfg["set"]["radius"] > 0, "set.radius must be positive")
    _require(cfg["datum"]["beta"] >= 0, "datum.beta must be nonnegative (0 selects the balanced value)")
    m = cfg["minimize"]
    _require(m["max_outer"] >= 1, "minimize.max_outer must be at least 1")
    _require(m["flip_sweeps_per_outer"] >= 0, "minimize.flip_sweeps_per_outer must be nonnegative")
    _require(m["energy_tol"] > 0, "minimize.energy_tol must be positive")
    _require(m["temperature"] >= 0, "minimize.temperature must be nonnegative")
    _require(0 < m["cooling"] < 1, "minimize.cooling must lie in (0, 1)")
    _require(m["checkpoint_every"] >= 0 and m["audit_every"] >= 0, "minimize counters must be nonnegative")
    _require(cfg["perimeter"]["ntheta"] >= 16, "perimeter.ntheta must be at least 16")
    _require(1.0 <= cfg["curvature"]["delta_cells"] <= 16.0, "curvature.delta_cells must lie in [1, 16]")
    _require(1.0 <= cfg["residual"]["delta_cells"] <= 16.0, "residual.delta_cells must lie in [1, 16]")
    for sec in ("density", "growth"):
        s = cfg[sec]
        _require(s["r_min_cells"] >= 2.0, f"{sec}.r_min_cells must be at least 2")
        _require(s["n_radii"] >= (4 if sec == "growth" else 1), f"{sec}.n_radii is too small")
        _require(s["n_centers"] >= 1, f"{sec}.n_centers must be positive")
        _require(s["r_max"] > s["r_min_cells"] * 2 * g["box_half_width"] / g["nx"],
                 f"{sec}.r_max must exceed the smallest radius")
    if cfg["pair"]["source"] == "checkpoint":
        _require(bool(cfg["pair"]["path"]), "pair.path is required when pair.source is checkpoint")
    ins = cfg["instability"]
    _require(bool(ins["r_small_list"]) and all(isinstance(r, (int, float)) and r > 0 for r in ins["r_small_list"]),
             "instability.r_small_list must be a nonempty list of positive radii")
    _require(ins["r_large"] > 0, "instability.r_large must be positive")
    _require(0 < ins["pinch_width"] < 0.125, "instability.pinch_width must lie in (0, 1/8)")
    _require(ins["box_factor"] >= 4, "instability.box_factor must be at least 4")
    _require(ins["n"] >= 16 and ins["n"] % 2 == 0, "instability.n must be even and >= 16")
    _require(ins["gamma"] > 0, "instability.gamma must be positive")
    _require(ins["restarts"] >= 0, "instability.restarts must be nonnegative")
    p = cfg["phi"]
    if p["kind"] == "power_cap":
        _require(p["gamma"] > 0, "phi.gamma must be positive")
        _require(p["k_o"] >= 1, "phi.k_o must be at least 1")
    if p["kind"] == "table":
        _require(len(p["table_t"]) >= 2 and len(p["table_t"]) == len(p["table_phi"]),
                 "phi.table_t and phi.table_phi need at least two matching knots")
    return cfg


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, assignments) -> dict:
    """Apply ``key.sub=value`` assignments; values are parsed as JSON when possible."""
    out = copy.deepcopy(raw)
    for item in assignments or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node, dflt = out, DEFAULTS
        for part in parts[:-1]:
            if not isinstance(dflt, dict) or part not in dflt or not isinstance(dflt[part], dict):
                raise ConfigError(f"unknown key {key!r}")
            node = node.setdefault(part, {})
            dflt = dflt[part]
        if parts[-1] not in dflt:
            raise ConfigError(f"unknown key {key!r}")
        node[parts[-1]] = _parse_value(text)
    return out


def load_config(path, overrides=()) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return validate(apply_overrides(raw, overrides))


def config_hash(cfg: dict) -> str:
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()
