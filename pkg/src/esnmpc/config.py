"""Experiment config files.

A config is a YAML mapping with up to six sections. Every key is optional;
omitted keys take the defaults below. Unknown sections or keys are errors.

.. code-block:: yaml

    plant:      {m: 1.0, k: 10.0, b: 0.5, dt: 0.1}
    residual:   {kind: combined, true_m: 1.0, true_k: 12.0, true_b: 1.0, alpha: 0.05}
    selectors:  {b_n: [[1, 0], [0, 1]], b_z: [[1, 0, 0], [0, 1, 0], [0, 0, 1]]}
    esn:        {reservoir_size: 1500, leak_rate: 0.4, spectral_radius: 1.0, degree: 3,
                 input_scale: 1.0, beta: 1.0e-4, washout: 30}
    mpc:        {horizon: 20, q_diag: [1.0, 0.1], r: 0.1, reference: [0.0, 0.0],
                 terminal_mode: riccati, u_limit: null}
    experiment: {sim_steps: 100, x0: [10.0, 0.0], retrain_every: null, seed: 0,
                 predict_train_len: 70, predict_horizon: 30, compensation_input: current}
"""

from __future__ import annotations

import copy
from pathlib import Path

import numpy as np
import yaml

from .esn import EsnConfig
from .experiment import ExperimentConfig
from .mpc import MpcConfig
from .plant import ResidualSelector, ResidualSpec, SpringDamperParams

DEFAULTS: dict = {
    "plant": {"m": 1.0, "k": 10.0, "b": 0.5, "dt": 0.1},
    "residual": {"kind": "combined", "true_m": 1.0, "true_k": 12.0, "true_b": 1.0, "alpha": 0.05},
    "selectors": {"b_n": [[1.0, 0.0], [0.0, 1.0]],
                  "b_z": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]},
    "esn": {"reservoir_size": 1500, "leak_rate": 0.4, "spectral_radius": 1.0, "degree": 3,
            "input_scale": 1.0, "beta": 1e-4, "washout": 30},
    "mpc": {"horizon": 20, "q_diag": [1.0, 0.1], "r": 0.1, "reference": [0.0, 0.0],
            "terminal_mode": "riccati", "u_limit": None},
    "experiment": {"sim_steps": 100, "x0": [10.0, 0.0], "retrain_every": None, "seed": 0,
                   "predict_train_len": 70, "predict_horizon": 30,
                   "compensation_input": "current"},
}

_INT_KEYS = {"reservoir_size", "degree", "washout", "horizon", "sim_steps", "retrain_every",
             "seed", "predict_train_len", "predict_horizon"}


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config key '{key}': {message}")


def _check_type(key: str, name: str, value):
    if value is None:
        return value
    if name in _INT_KEYS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
    elif isinstance(value, bool):
        raise ConfigError(key, f"unexpected boolean {value!r}")
    elif isinstance(value, str) and isinstance(DEFAULTS[key.split(".")[0]][name], float):
        # YAML 1.1 reads exponents without a dot (``1e-4``) as strings
        try:
            return float(value)
        except ValueError:
            raise ConfigError(key, f"expected a number, got {value!r}") from None
    return value


def merge(overrides: dict | None) -> dict:
    """Overlay ``overrides`` on the defaults, rejecting unknown sections and keys."""
    merged = copy.deepcopy(DEFAULTS)
    if not overrides:
        return merged
    if not isinstance(overrides, dict):
        raise ConfigError("<root>", "config must be a mapping of sections")
    for section, values in overrides.items():
        if section not in DEFAULTS:
            raise ConfigError(str(section), "unknown section")
        if values is None:
            continue
        if not isinstance(values, dict):
            raise ConfigError(section, "section must be a mapping")
        for name, value in values.items():
            key = f"{section}.{name}"
            if name not in DEFAULTS[section]:
                raise ConfigError(key, "unknown key")
            merged[section][name] = _check_type(key, name, value)
    return merged


def _build(section: str, factory, **kwargs):
    try:
        return factory(**kwargs)
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        # name the offending key when the validator mentions it
        names = list(DEFAULTS.get(section, {}))
        leading = [n for n in names if msg.startswith(n)]
        for name in leading + [n for n in names if n in msg]:
            raise ConfigError(f"{section}.{name}", msg) from exc
        raise ConfigError(section, msg) from exc


def from_dict(raw: dict | None) -> ExperimentConfig:
    cfg = merge(raw)
    p = cfg["plant"]
    plant_params = _build("plant", SpringDamperParams, m=p["m"], k=p["k"], b=p["b"], dt=p["dt"])
    r = cfg["residual"]
    true_params = _build("residual", SpringDamperParams,
                         m=r["true_m"], k=r["true_k"], b=r["true_b"], dt=p["dt"])
    residual = _build("residual", ResidualSpec, kind=r["kind"], true_params=true_params,
                      alpha=r["alpha"])
    s = cfg["selectors"]
    selector = _build("selectors", ResidualSelector,
                      b_n=np.asarray(s["b_n"], dtype=float), b_z=np.asarray(s["b_z"], dtype=float))
    e = cfg["esn"]
    esn_cfg = _build("esn", EsnConfig, input_dim=selector.n_z, output_dim=selector.n,
                     seed=cfg["experiment"]["seed"], **e)
    m = cfg["mpc"]
    mpc_cfg = _build("mpc", MpcConfig, horizon=m["horizon"], q_diag=tuple(m["q_diag"]),
                     r_scalar=m["r"], reference=tuple(m["reference"]),
                     terminal_mode=m["terminal_mode"], u_limit=m["u_limit"])
    x = cfg["experiment"]
    return _build("experiment", ExperimentConfig, plant=plant_params, residual=residual,
                  selector=selector, esn=esn_cfg, mpc=mpc_cfg, sim_steps=x["sim_steps"],
                  x0=tuple(x["x0"]), retrain_every=x["retrain_every"], seed=x["seed"],
                  predict_train_len=x["predict_train_len"],
                  predict_horizon=x["predict_horizon"],
                  compensation_input=x["compensation_input"])


def parse_config(path) -> ExperimentConfig:
    """Read a YAML config file; missing keys take the defaults."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"cannot parse {path}: {exc}") from exc
    return from_dict(raw)
