"""Scenario configuration: a single JSON document describing the plant,
objective, timers, input set, initialization, policy, horizon, and an
optional perturbation block."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import (
    Ball,
    Box,
    JumpPolicy,
    ModelParams,
    Objective,
    Plant,
    State,
    Timers,
    make_state,
    strict_initial_state,
)
from .robustness import Perturbation


class ConfigError(ValueError):
    """Malformed or inconsistent scenario configuration."""


@dataclass
class ScenarioConfig:
    params: ModelParams
    policy: JumpPolicy
    horizon: tuple  # (T seconds, J jumps)
    sample_dt: float
    init_mode: str  # "strict" | "global"
    zeta0: State | None = None
    perturbation: Perturbation | None = None
    r_scale: float = 1.0  # debug knob for negative-control runs

    def initial_state(self) -> State:
        if self.zeta0 is not None:
            return self.zeta0
        return strict_initial_state(self.params)


def _require(data: dict, key: str, where: str):
    if key not in data:
        raise ConfigError(f"missing required field '{where}.{key}'")
    return data[key]


def _matrix(data, where: str, shape=None) -> np.ndarray:
    try:
        mat = np.array(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field '{where}' is not numeric: {exc}") from None
    mat = np.atleast_2d(mat)
    if shape is not None and mat.shape != shape:
        raise ConfigError(f"field '{where}' has shape {mat.shape}, expected {shape}")
    return mat


def _vector(data, where: str, length=None) -> np.ndarray:
    try:
        vec = np.atleast_1d(np.array(data, dtype=float))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field '{where}' is not numeric: {exc}") from None
    if vec.ndim != 1:
        raise ConfigError(f"field '{where}' must be a flat list")
    if length is not None and len(vec) != length:
        raise ConfigError(f"field '{where}' has length {len(vec)}, expected {length}")
    return vec


def _parse_input_set(data: dict):
    kind = _require(data, "kind", "input_set")
    if kind == "box":
        return Box(_vector(_require(data, "lo", "input_set"), "input_set.lo"),
                   _vector(_require(data, "hi", "input_set"), "input_set.hi"))
    if kind == "ball":
        return Ball(_vector(_require(data, "center", "input_set"),
                            "input_set.center"),
                    float(_require(data, "radius", "input_set")))
    raise ConfigError(f"input_set.kind must be 'box' or 'ball', got {kind!r}")


def parse_config(source) -> ScenarioConfig:
    """Build a ScenarioConfig from a JSON file path or an already-loaded dict."""
    if isinstance(source, (str, Path)):
        try:
            raw = json.loads(Path(source).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        except OSError as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from None
    else:
        raw = source
    if not isinstance(raw, dict):
        raise ConfigError("top-level config must be a JSON object")

    plant_raw = _require(raw, "plant", "config")
    a = _matrix(_require(plant_raw, "A", "plant"), "plant.A")
    if a.shape[0] != a.shape[1]:
        raise ConfigError(f"plant.A must be square, got shape {a.shape}")
    n = a.shape[0]
    b = _matrix(_require(plant_raw, "B", "plant"), "plant.B")
    if b.shape[0] != n:
        raise ConfigError(f"plant.B must have {n} rows, got {b.shape[0]}")
    m = b.shape[1]
    c_out = _matrix(_require(plant_raw, "C", "plant"), "plant.C")
    if c_out.shape[1] != n:
        raise ConfigError(f"plant.C must have {n} columns, got {c_out.shape[1]}")
    p = c_out.shape[0]
    d = _vector(_require(plant_raw, "d", "plant"), "plant.d", p)
    plant = Plant(a, b, c_out, d)

    obj_raw = _require(raw, "objective", "config")
    objective = Objective(
        _matrix(_require(obj_raw, "Q_u", "objective"), "objective.Q_u", (m, m)),
        _matrix(_require(obj_raw, "Q_y", "objective"), "objective.Q_y", (p, p)),
        _vector(_require(obj_raw, "y_hat", "objective"), "objective.y_hat", p),
        float(_require(obj_raw, "gamma", "objective")),
    )

    tm_raw = _require(raw, "timers", "config")
    timers = Timers(
        float(_require(tm_raw, "tau_c_min", "timers")),
        float(_require(tm_raw, "tau_c_max", "timers")),
        float(_require(tm_raw, "tau_g_comp", "timers")),
        int(_require(tm_raw, "ell", "timers")),
    )

    input_set = _parse_input_set(_require(raw, "input_set", "config"))

    overrides = raw.get("overrides", {})
    h_override = None
    if overrides.get("H") is not None:
        h_override = _matrix(overrides["H"], "overrides.H", (p, m))
    rho_override = overrides.get("rho")
    r_scale = float(overrides.get("r_scale", 1.0))

    params = ModelParams(
        plant, objective, timers, input_set,
        h_override=h_override,
        rho_override=None if rho_override is None else float(rho_override),
        sample_with=raw.get("sample_with", "new_input"),
    )
    if params.sample_with not in ("new_input", "old_input"):
        raise ConfigError("sample_with must be 'new_input' or 'old_input'")

    policy_raw = raw.get("policy", {})
    policy = JumpPolicy(
        tau_c_reset=policy_raw.get("tau_c_reset", "min"),
        tau_c_value=policy_raw.get("tau_c_value"),
        case3_order=policy_raw.get("case3_order", "g1_first"),
        seed=int(policy_raw.get("seed", 0)),
    )
    if policy.tau_c_reset not in ("fixed", "uniform", "min", "max"):
        raise ConfigError("policy.tau_c_reset must be fixed|uniform|min|max")
    if policy.case3_order not in ("g1_first", "g2_first", "random"):
        raise ConfigError("policy.case3_order must be g1_first|g2_first|random")

    horizon_raw = _require(raw, "horizon", "config")
    horizon = (float(_require(horizon_raw, "T", "horizon")),
               int(_require(horizon_raw, "J", "horizon")))
    sample_dt = float(raw.get("sample_dt", 0.01))

    init_raw = raw.get("init", {})
    init_mode = init_raw.get("mode", "strict")
    if init_mode not in ("strict", "global"):
        raise ConfigError("init.mode must be 'strict' or 'global'")
    zeta0 = None
    if init_raw.get("zeta0") is not None:
        z_raw = init_raw["zeta0"]
        zeta0 = make_state(
            _vector(_require(z_raw, "x", "init.zeta0"), "init.zeta0.x", n),
            _vector(_require(z_raw, "u", "init.zeta0"), "init.zeta0.u", m),
            _vector(_require(z_raw, "y_s", "init.zeta0"), "init.zeta0.y_s", p),
            _vector(_require(z_raw, "z", "init.zeta0"), "init.zeta0.z", m),
            float(_require(z_raw, "tau_c", "init.zeta0")),
            float(_require(z_raw, "tau_g", "init.zeta0")),
        )

    perturbation = None
    if raw.get("perturbation") is not None:
        pr = raw["perturbation"]
        perturbation = Perturbation(
            a_hat=_matrix(pr.get("A_hat", np.zeros((n, n))), "perturbation.A_hat",
                          (n, n)),
            b_hat=_matrix(pr.get("B_hat", np.zeros((n, m))), "perturbation.B_hat",
                          (n, m)),
            h_hat=_matrix(pr.get("H_hat", np.zeros((p, m))), "perturbation.H_hat",
                          (p, m)),
            kappa_c=float(pr.get("kappa_c", 0.0)),
            kappa_g=float(pr.get("kappa_g", 0.0)),
            theta_g_comp=float(pr.get("theta_g_comp", 0.0)),
            theta_c_min=float(pr.get("theta_c_min", 0.0)),
            theta_c_max=float(pr.get("theta_c_max", 0.0)),
        )

    return ScenarioConfig(params, policy, horizon, sample_dt, init_mode, zeta0,
                          perturbation, r_scale)


def config_to_dict(config: ScenarioConfig) -> dict:
    """Serialize a scenario back to the JSON structure parse_config accepts."""
    params = config.params
    plant = params.plant
    out = {
        "plant": {
            "A": plant.a.tolist(),
            "B": plant.b.tolist(),
            "C": plant.c_out.tolist(),
            "d": plant.d.tolist(),
        },
        "objective": {
            "Q_u": params.objective.q_u.tolist(),
            "Q_y": params.objective.q_y.tolist(),
            "y_hat": params.objective.y_hat.tolist(),
            "gamma": params.objective.gamma,
        },
        "timers": {
            "tau_c_min": params.timers.tau_c_min,
            "tau_c_max": params.timers.tau_c_max,
            "tau_g_comp": params.timers.tau_g_comp,
            "ell": params.timers.ell,
        },
        "sample_with": params.sample_with,
        "policy": {
            "tau_c_reset": config.policy.tau_c_reset,
            "tau_c_value": config.policy.tau_c_value,
            "case3_order": config.policy.case3_order,
            "seed": config.policy.seed,
        },
        "horizon": {"T": config.horizon[0], "J": config.horizon[1]},
        "sample_dt": config.sample_dt,
        "init": {"mode": config.init_mode},
    }
    input_set = params.input_set
    if isinstance(input_set, Box):
        out["input_set"] = {"kind": "box", "lo": input_set.lo.tolist(),
                            "hi": input_set.hi.tolist()}
    else:
        out["input_set"] = {"kind": "ball", "center": input_set.center.tolist(),
                            "radius": input_set.radius}
    overrides = {}
    if params.h_override is not None:
        overrides["H"] = np.asarray(params.h_override).tolist()
    if params.rho_override is not None:
        overrides["rho"] = params.rho_override
    if config.r_scale != 1.0:
        overrides["r_scale"] = config.r_scale
    if overrides:
        out["overrides"] = overrides
    if config.zeta0 is not None:
        z = config.zeta0
        out["init"]["zeta0"] = {
            "x": z.x.tolist(), "u": z.u.tolist(), "y_s": z.y_s.tolist(),
            "z": z.z.tolist(), "tau_c": z.tau_c, "tau_g": z.tau_g,
        }
    if config.perturbation is not None:
        pert = config.perturbation
        out["perturbation"] = {
            "A_hat": pert.a_hat.tolist(),
            "B_hat": pert.b_hat.tolist(),
            "H_hat": pert.h_hat.tolist(),
            "kappa_c": pert.kappa_c,
            "kappa_g": pert.kappa_g,
            "theta_g_comp": pert.theta_g_comp,
            "theta_c_min": pert.theta_c_min,
            "theta_c_max": pert.theta_c_max,
        }
    return out
