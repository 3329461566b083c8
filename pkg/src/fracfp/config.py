"""Run configuration: a versioned JSON schema, validation and the scenario catalog."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coefficients import CoefficientSet, build_coefficients
from .errors import ConfigError
from .resolvent import SolverControls
from .spectral import Field, Grid

__all__ = ["SCHEMA_VERSION", "SCENARIOS", "RunConfig", "load_config", "initial_field", "deep_merge"]

SCHEMA_VERSION = 1

_TOP_KEYS = {"schema_version", "scenario", "grid", "coefficients", "initial", "solver", "evolution",
             "resolvent", "gauge", "sde", "kernel", "seed", "out", "pipeline"}
_STAGES = ("validate", "resolvent", "evolve", "gauge", "sde", "kernel")

_GAUSS = {"name": "gaussian", "center": 0.0, "sigma": 0.7}

SCENARIOS: dict = {
    "linear_heat_d1": {
        "grid": {"dim": 1, "n": 256, "L": 8.0},
        "coefficients": {"s": 0.75, "beta": {"name": "linear"}},
        "initial": dict(_GAUSS),
        "evolution": {"T": 0.5, "h": 1e-3, "snapshot_stride": 50},
        "pipeline": ["validate", "evolve"],
    },
    "porous_d1": {
        "grid": {"dim": 1, "n": 256, "L": 4.0},
        "coefficients": {"s": 0.75, "beta": {"name": "porous_medium", "m": 2, "truncate": 2},
                         "b": {"name": "lorentzian"}, "D": {"name": "sine_D", "amplitude": 0.5}},
        "initial": {"name": "gaussian", "center": 0.0, "sigma": 0.5},
        "resolvent": {"lam_fraction": 0.5},
        "evolution": {"T": 0.2, "h": 1e-2, "snapshot_stride": 2},
        "pipeline": ["validate", "resolvent", "evolve"],
    },
    "gauge_d1": {
        "grid": {"dim": 1, "n": 128, "L": 4.0},
        "coefficients": {"s": 0.75, "beta": {"name": "porous_medium", "m": 2, "truncate": 2},
                         "b": {"name": "lorentzian"}, "D": {"name": "sine_D", "amplitude": 0.5}},
        "initial": {"name": "gaussian", "center": 0.0, "sigma": 0.5},
        "evolution": {"T": 0.2, "h": 1e-2, "snapshot_stride": 2},
        "gauge": {"eps_g": 0.01, "tol": 1e-5, "other": {"initial": {"name": "gaussian", "center": 0.4,
                                                                      "sigma": 0.5}}},
        "pipeline": ["validate", "evolve", "gauge"],
    },
    "sde_linear_d1": {
        "grid": {"dim": 1, "n": 128, "L": 8.0},
        "coefficients": {"s": 0.75, "beta": {"name": "linear"}},
        "initial": dict(_GAUSS),
        "evolution": {"T": 0.5, "h": 1e-2, "snapshot_stride": 25},
        "sde": {"N": 100000, "mode": "decoupled", "tol": 0.05},
        "pipeline": ["validate", "evolve", "sde"],
    },
    "sde_bounded_d1": {
        "grid": {"dim": 1, "n": 128, "L": 8.0},
        "coefficients": {"s": 0.75, "beta": {"name": "bounded_porous"}, "b": {"name": "lorentzian"},
                         "D": {"name": "sine_D", "amplitude": 0.5}},
        "initial": dict(_GAUSS),
        "evolution": {"T": 0.5, "h": 1e-2, "snapshot_stride": 25},
        "sde": {"N": 100000, "mode": "decoupled", "tol": 0.08},
        "pipeline": ["validate", "evolve", "sde"],
    },
    "kernel_identities": {
        "grid": {"dim": 1, "n": 64, "L": 4.0},
        "coefficients": {"s": 0.75},
        "initial": dict(_GAUSS),
        "kernel": {"s": [0.6, 0.75], "eps": [0.5, 1.0], "d": [1, 2], "r": [0.5, 1.0, 2.0]},
        "pipeline": ["kernel"],
    },
}


def deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _positive(section: dict, key: str, where: str, integer: bool = False):
    v = section.get(key)
    if v is None:
        return
    ok = isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) and v > 0
    if integer:
        ok = ok and float(v).is_integer()
    if not ok:
        raise ConfigError(f"{where}.{key} must be a positive {'integer' if integer else 'number'}, got {v!r}")


def initial_field(spec: dict, grid: Grid) -> Field:
    """Unit-mass initial density from a catalog entry (``gaussian``, ``bump``, ``two_bumps``)."""
    name = spec.get("name", "gaussian")
    sigma = float(spec.get("sigma", 0.7))
    c = np.asarray(spec.get("center", 0.0), dtype=float) * np.ones(grid.dim)
    r2 = sum((m - ci) ** 2 for m, ci in zip(grid.mesh, c))
    if name == "gaussian":
        v = np.exp(-r2 / (2 * sigma**2))
    elif name == "bump":
        t = r2 / sigma**2
        v = np.where(t < 1, np.exp(-1.0 / np.maximum(1 - t, 1e-300)), 0.0)
    elif name == "two_bumps":
        c2 = -c
        r2b = sum((m - ci) ** 2 for m, ci in zip(grid.mesh, c2))
        v = np.exp(-r2 / (2 * sigma**2)) + 0.5 * np.exp(-r2b / (2 * sigma**2))
    else:
        raise ConfigError(f"unknown initial density {name!r}")
    f = Field(grid, v)
    m = f.mass()
    if not m > 0:
        raise ConfigError("initial density has zero mass on the grid")
    return f * (float(spec.get("mass", 1.0)) / m)


@dataclass
class RunConfig:
    """Validated run description; ``raw`` is the merged JSON echo."""

    raw: dict
    grid: Grid = field(init=False)
    cs: CoefficientSet = field(init=False)
    controls: SolverControls = field(init=False)

    def __post_init__(self):
        self.raw = _validate(self.raw)
        g = self.raw["grid"]
        self.grid = Grid(int(g["dim"]), int(g["n"]), float(g["L"]))
        self.cs = build_coefficients(self.raw["coefficients"], self.grid.dim, self.grid.L)
        sol = self.raw.get("solver", {})
        try:
            self.controls = SolverControls(**sol)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad solver block: {exc}") from exc

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        name = d.get("scenario")
        if name is not None:
            if name not in SCENARIOS:
                raise ConfigError(f"unknown scenario {name!r}; known: {sorted(SCENARIOS)}")
            d = deep_merge(SCENARIOS[name], d)
        return cls(d)

    @property
    def scenario(self) -> str:
        return self.raw.get("scenario", "custom")

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    @property
    def pipeline(self) -> list:
        return list(self.raw.get("pipeline", ["validate", "evolve"]))

    def initial(self) -> Field:
        return initial_field(self.raw.get("initial", _GAUSS), self.grid)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


def _validate(d: dict) -> dict:
    d = copy.deepcopy(d)
    d.setdefault("schema_version", SCHEMA_VERSION)
    if d["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {d['schema_version']!r}")
    unknown = set(d) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("grid", "coefficients"):
        if not isinstance(d.get(key), dict):
            raise ConfigError(f"missing or malformed section {key!r}")
    g = d["grid"]
    if g.get("dim") not in (1, 2, 3):
        raise ConfigError("grid.dim must be 1, 2 or 3")
    _positive(g, "n", "grid", integer=True)
    _positive(g, "L", "grid")
    if "n" not in g or "L" not in g:
        raise ConfigError("grid needs n and L")
    if int(g["n"]) % 2:
        raise ConfigError("grid.n must be even")
    if "s" not in d["coefficients"]:
        raise ConfigError("coefficients.s is required")
    for key in ("tol_l1", "max_iter", "dense_limit", "max_outer"):
        _positive(d.get("solver", {}), key, "solver", integer=key != "tol_l1")
    ev = d.get("evolution", {})
    for key in ("T", "h"):
        _positive(ev, key, "evolution")
    _positive(ev, "snapshot_stride", "evolution", integer=True)
    if "h" in ev and "T" in ev and ev["h"] > ev["T"]:
        raise ConfigError("evolution.h must not exceed evolution.T")
    sde = d.get("sde")
    if sde is not None:
        _positive(sde, "N", "sde", integer=True)
        _positive(sde, "dt", "sde")
        _positive(sde, "tol", "sde")
        if sde.get("mode", "decoupled") not in ("decoupled", "self_consistent"):
            raise ConfigError("sde.mode must be decoupled or self_consistent")
    gauge = d.get("gauge")
    if gauge is not None:
        _positive(gauge, "eps_g", "gauge")
        _positive(gauge, "tol", "gauge")
    for stage in d.get("pipeline", []):
        if stage not in _STAGES:
            raise ConfigError(f"unknown pipeline stage {stage!r}")
    seed = d.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return d


def load_config(path) -> RunConfig:
    """Read and validate a JSON run configuration."""
    p = Path(path)
    try:
        data = json.loads(p.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {p}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {p}: {exc}") from exc
    return RunConfig.from_dict(data)
