"""Config file schema, presets and command-line style overrides.

A config is a YAML mapping::

    horizon: 80            # T, days
    dt: 0.016
    groups:
      - name: low
        mass: 0.3224
        beta: 0.4
        gamma: 1/7         # numbers or "a/b" fractions
        kappa: 0.003
        c_lambda: 1.0
        c_nu: 0.015
        c_I: 1.05
        c_pS: 0.0          # optional, default 0
        c_pI: 0.0          # optional, default 0
        initial: [0.99, 0.01, 0.0]
        guidelines: {S: 0.9, I: 0.9, R: 0.9}   # scalar or one value per grid point
    contact: [[1.0, 0.925, 0.925], ...]         # K x K, optional when K == 1
    solver: {epsilon: 0.1, max_iterations: 500, damping: 1.0, awareness: false}
"""

from __future__ import annotations

from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np
import yaml

from .model import (
    STATES,
    ConfigError,
    ContactMatrix,
    GroupParams,
    Guidelines,
    ModelConfig,
    SolverSettings,
    TimeGrid,
)

PRESETS = {
    "table1": {
        "horizon": 80,
        "dt": 0.016,
        "groups": [
            {
                "name": "all",
                "mass": 1.0,
                "beta": 0.4,
                "gamma": "1/7",
                "kappa": 0.005,
                "c_lambda": 1.0,
                "c_nu": 0.001,
                "c_I": 1.0,
                "initial": [0.99, 0.01, 0.0],
                "guidelines": {"S": 0.9, "I": 0.9, "R": 0.9},
            }
        ],
        "contact": [[1.0]],
        "solver": {"epsilon": 0.1},
    },
    "table2": {
        "horizon": 80,
        "dt": 0.016,
        "groups": [
            {
                "name": name,
                "mass": m,
                "beta": b,
                "gamma": "1/7",
                "kappa": 0.003,
                "c_lambda": 1.0,
                "c_nu": cn,
                "c_I": ci,
                "initial": [0.99, 0.01, 0.0],
                "guidelines": {"S": 0.9, "I": 0.9, "R": 0.9},
            }
            for name, m, b, cn, ci in [
                ("low", 0.3224, 0.40, 0.015, 1.05),
                ("middle", 0.3164, 0.35, 0.013, 1.00),
                ("high", 0.3612, 0.30, 0.009, 0.80),
            ]
        ],
        "contact": [[1.0, 0.925, 0.925], [0.925, 1.0, 0.925], [0.925, 0.925, 1.0]],
        "solver": {"epsilon": 0.1},
    },
}

_GROUP_KEYS = ("beta", "gamma", "kappa", "c_lambda", "c_nu", "c_I")
_SOLVER_KEYS = {
    "epsilon": "epsilon",
    "max_iterations": "max_iterations",
    "damping": "damping",
    "awareness": "awareness_enabled",
}


def _num(value, where: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(Fraction(value.replace(" ", "")))
        except (ValueError, ZeroDivisionError):
            pass
    raise ConfigError(f"{where}: expected a number, got {value!r}")


def _require(mapping, key, where):
    if not isinstance(mapping, dict) or key not in mapping:
        raise ConfigError(f"{where}: missing required key {key!r}")
    return mapping[key]


def config_from_dict(data: dict) -> ModelConfig:
    """Build and validate a :class:`ModelConfig` from a parsed mapping."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at top level")
    grid = TimeGrid(_num(_require(data, "horizon", "config"), "horizon"),
                    _num(_require(data, "dt", "config"), "dt"))
    n1 = grid.n_steps + 1
    raw_groups = _require(data, "groups", "config")
    if not isinstance(raw_groups, list) or not raw_groups:
        raise ConfigError("groups: expected a non-empty list")
    groups, initial, lam = [], [], []
    for k, g in enumerate(raw_groups):
        where = f"groups[{k}]"
        kw = {key: _num(_require(g, key, where), f"{where}.{key}") for key in _GROUP_KEYS}
        kw["c_pS"] = _num(g.get("c_pS", 0.0), f"{where}.c_pS")
        kw["c_pI"] = _num(g.get("c_pI", 0.0), f"{where}.c_pI")
        kw["mass"] = _num(g.get("mass", 1.0), f"{where}.mass")
        kw["name"] = str(g.get("name", k))
        groups.append(GroupParams(**kw))
        pi0 = _require(g, "initial", where)
        if not isinstance(pi0, list) or len(pi0) != 3:
            raise ConfigError(f"{where}.initial: expected [S, I, R]")
        initial.append([_num(x, f"{where}.initial") for x in pi0])
        guide = _require(g, "guidelines", where)
        cols = []
        for e in STATES:
            val = _require(guide, e, f"{where}.guidelines")
            if isinstance(val, list):
                if len(val) != n1:
                    raise ConfigError(
                        f"{where}.guidelines.{e}: expected {n1} values (one per grid point), got {len(val)}"
                    )
                cols.append([_num(v, f"{where}.guidelines.{e}") for v in val])
            else:
                cols.append([_num(val, f"{where}.guidelines.{e}")] * n1)
        lam.append(np.array(cols).T)
    lam_arr = np.stack(lam, axis=1)
    if np.any(lam_arr <= 0):
        raise ConfigError("guidelines: values must be > 0 (full lockdown excluded)")
    K = len(groups)
    contact = data.get("contact")
    if contact is None:
        if K != 1:
            raise ConfigError("contact: required when there is more than one group")
        contact = [[1.0]]
    w = np.array([[_num(x, "contact") for x in row] for row in contact])
    raw_solver = data.get("solver") or {}
    unknown = set(raw_solver) - set(_SOLVER_KEYS)
    if unknown:
        raise ConfigError(f"solver: unknown keys {sorted(unknown)}")
    skw = {}
    for key, attr in _SOLVER_KEYS.items():
        if key in raw_solver:
            v = raw_solver[key]
            if key == "awareness":
                skw[attr] = bool(v)
            elif key == "max_iterations":
                skw[attr] = int(_num(v, "solver.max_iterations"))
            else:
                skw[attr] = _num(v, f"solver.{key}")
    return ModelConfig(
        groups=tuple(groups),
        guidelines=Guidelines(lam_arr),
        contact=ContactMatrix(w),
        initial=np.array(initial),
        grid=grid,
        solver=SolverSettings(**skw),
    )


def load_config(path) -> ModelConfig:
    """Parse a YAML config file; parse errors report the offending line."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"cannot parse {path}{loc}: {getattr(exc, 'problem', exc)}") from exc
    return config_from_dict(data)


def preset(name: str) -> ModelConfig:
    try:
        return config_from_dict(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def config_to_dict(config: ModelConfig) -> dict:
    lam = config.guidelines.values
    groups = []
    for k, g in enumerate(config.groups):
        guide = {}
        for e, name in enumerate(STATES):
            col = lam[:, k, e]
            guide[name] = float(col[0]) if np.all(col == col[0]) else [float(x) for x in col]
        groups.append(
            {
                "name": g.name,
                "mass": g.mass,
                **{key: getattr(g, key) for key in _GROUP_KEYS},
                "c_pS": g.c_pS,
                "c_pI": g.c_pI,
                "initial": [float(x) for x in config.initial[k]],
                "guidelines": guide,
            }
        )
    s = config.solver
    return {
        "horizon": config.grid.horizon,
        "dt": config.grid.dt,
        "groups": groups,
        "contact": [[float(x) for x in row] for row in config.contact.w],
        "solver": {
            "epsilon": s.epsilon,
            "max_iterations": int(s.max_iterations),
            "damping": s.damping,
            "awareness": bool(s.awareness_enabled),
        },
    }


def dump_config(config: ModelConfig) -> str:
    return yaml.safe_dump(config_to_dict(config), sort_keys=False)


def _set_guideline(config: ModelConfig, state: int, value: float) -> ModelConfig:
    lam = config.guidelines.values.copy()
    lam[:, :, state] = value
    return replace(config, guidelines=Guidelines(lam))


def _set_cp(config: ModelConfig, value: float) -> ModelConfig:
    cfg = config.with_groups(c_pS=value, c_pI=value)
    return replace(cfg, solver=replace(cfg.solver, awareness_enabled=True))


OVERRIDABLE = {
    "lambda_S": lambda c, v: _set_guideline(c, 0, v),
    "lambda_I": lambda c, v: _set_guideline(c, 1, v),
    "lambda_R": lambda c, v: _set_guideline(c, 2, v),
    "c_p": _set_cp,
    "c_pS": lambda c, v: c.with_groups(c_pS=v),
    "c_pI": lambda c, v: c.with_groups(c_pI=v),
    "c_nu": lambda c, v: c.with_groups(c_nu=v),
    "epsilon": lambda c, v: replace(c, solver=replace(c.solver, epsilon=v)),
    "damping": lambda c, v: replace(c, solver=replace(c.solver, damping=v)),
    "max_iterations": lambda c, v: replace(c, solver=replace(c.solver, max_iterations=int(v))),
}


def apply_overrides(config: ModelConfig, overrides: dict) -> ModelConfig:
    """Apply named scalar overrides, applied uniformly across groups.

    ``c_p`` sets both awareness coefficients and turns awareness on;
    guideline overrides hold over the whole horizon.
    """
    for name, value in overrides.items():
        if value is None:
            continue
        try:
            fn = OVERRIDABLE[name]
        except KeyError:
            raise ConfigError(f"unknown override {name!r}") from None
        config = fn(config, value)
    return config
