"""Flat key/value config files and run provenance.

Config files are plain text, one ``key = value`` per line, ``#`` comments.
Three kinds are used: market parameters, grid ranges and reward settings;
the README documents every key.  A run's provenance hash is a SHA-256 over
the canonicalized parsed settings, embedded in every output file.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Dict, Optional

from .dp_solver.grid import GridSpec
from .market_model import ModelParams, parse_intensity
from .reward import RewardSpec

__all__ = ["ConfigError", "config_hash", "grid_from_config",
           "model_params_from_config", "parse_kv_file", "reward_from_config"]


class ConfigError(ValueError):
    """Malformed configuration contents."""


def parse_kv_file(path: str | Path) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip()
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = val.strip()
    return out


def _take(kv: Dict[str, str], allowed: Dict[str, object], path) -> Dict[str, object]:
    vals = dict(allowed)
    for key, raw in kv.items():
        if key not in allowed:
            raise ConfigError(f"{path}: unknown key {key!r}")
        default = allowed[key]
        try:
            if isinstance(default, bool):
                vals[key] = raw.lower() in ("1", "true", "yes")
            elif isinstance(default, int):
                vals[key] = int(raw)
            elif isinstance(default, float):
                vals[key] = float(raw)
            else:
                vals[key] = raw
        except ValueError as exc:
            raise ConfigError(f"{path}: bad value for {key!r}: {exc}") from exc
    return vals


_PARAM_KEYS = dict(sigma_a=10.0, sigma_b=10.0, delta_a=5.0, delta_b=5.0,
                   theta_a="linear:0.5", theta_b="linear:0.5",
                   lambda_a="table:[0.25]", lambda_b="table:[0.25]",
                   pa_bar=18, pb_under=12, epsilon=0.0, horizon=10.0,
                   q0_a=5.0, q0_b=5.0, pa0=16, pb0=15)


def model_params_from_config(path: str | Path) -> ModelParams:
    vals = _take(parse_kv_file(path), _PARAM_KEYS, path)
    try:
        return ModelParams(
            sigma_a=vals["sigma_a"], sigma_b=vals["sigma_b"],
            delta_a=vals["delta_a"], delta_b=vals["delta_b"],
            theta_a=parse_intensity(vals["theta_a"], zero_at_one=True),
            theta_b=parse_intensity(vals["theta_b"], zero_at_one=True),
            lambda_a=parse_intensity(vals["lambda_a"]),
            lambda_b=parse_intensity(vals["lambda_b"]),
            pa_bar=vals["pa_bar"], pb_under=vals["pb_under"],
            epsilon=vals["epsilon"], horizon=vals["horizon"],
            q0_a=vals["q0_a"], q0_b=vals["q0_b"],
            pa0=vals["pa0"], pb0=vals["pb0"])
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


_GRID_KEYS = dict(t_start=1.0, t_end=10.0, steps=9, q_max=10,
                  i_min=-20, i_max=20, pa_min=12, pa_max=18,
                  pb_min=12, pb_max=18)


def grid_from_config(path: str | Path) -> GridSpec:
    vals = _take(parse_kv_file(path), _GRID_KEYS, path)
    try:
        return GridSpec(**vals)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


_REWARD_KEYS = dict(r_c=1.0, r_i=1.0, variant="liquidation:2,2")


def reward_from_config(path: str | Path) -> RewardSpec:
    vals = _take(parse_kv_file(path), _REWARD_KEYS, path)
    try:
        return _parse_reward(vals["r_c"], vals["r_i"], vals["variant"])
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_reward(r_c: float, r_i: float, variant: str) -> RewardSpec:
    name, _, args = variant.partition(":")
    name = name.strip()
    if name == "linear":
        return RewardSpec(r_c=r_c, r_i=r_i, variant="linear")
    if name in ("target_abs", "target_quad"):
        return RewardSpec(r_c=r_c, r_i=r_i, variant=name, z0=float(args))
    if name == "liquidation":
        ua, _, ub = args.partition(",")
        return RewardSpec(r_c=r_c, r_i=r_i, variant="liquidation",
                          u_a=float(ua), u_b=float(ub))
    raise ConfigError(f"unknown reward variant {variant!r}")


def config_hash(*sections: Dict, extra: Optional[Dict] = None) -> str:
    """Provenance hash over parsed config sections and run settings."""
    payload = {"sections": [dict(sorted(s.items())) for s in sections],
               "extra": dict(sorted((extra or {}).items()))}
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"),
                      default=str).encode()
    return hashlib.sha256(blob).hexdigest()
