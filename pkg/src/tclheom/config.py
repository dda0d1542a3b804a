"""Run configuration: JSON input, defaults, overrides and model construction.

A run config looks like::

    {
      "model": {"type": "spin-boson", "epsilon": 0, "delta": 1,
                "bath": {"eta": 5, "omega_c": 5, "beta": 0.5, "n_matsubara": 2}},
      "hierarchy": {"depth": 12, "terminator": false},
      "integrator": {"dt": 0.005, "t_max": 10, "record_stride": 1},
      "initial": {"state": 1, "equilibrated": true}
    }

``model`` may instead be an exciton model (``dim``, ``h_matrix``, ``baths``,
``units``) or be replaced by ``model_file``. A bare exciton model file is
accepted as a whole config; its optional ``run`` block supplies defaults.
"""
from __future__ import annotations

import copy
import json
import math
from importlib import resources
from pathlib import Path

from .bath import BathError, BathSpec
from .model import ModelConfigError, SpinBosonParams, SystemModel, build_spin_boson, exciton_model_from_dict


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


DEFAULTS = {
    "hierarchy": {"depth": 12, "matsubara": None, "terminator": False},
    "integrator": {"dt": 0.005, "t_max": 10.0, "record_stride": 1},
    "initial": {"state": 1, "equilibrated": True},
    "generator": {"cond_threshold": 1e8, "det_threshold": 1e-10, "udot": "heom"},
    "expand": {"n_max": 12},
    "sweep": {
        "eta_grid": [1.0, 2.0, 4.0, 6.0, 8.0, 10.0],
        "beta": 0.5, "omega_c": 5.0, "epsilon": 0.0,
        "threshold": 1e-3, "reference_order": 10, "min_order": 12, "max_order": 28,
        "t_star": 2.5 * math.pi, "resolution": 0.01,
    },
    "threads": 1,
}

SAMPLE_FMO = "fmo_7site.json"


def sample_path(name: str = SAMPLE_FMO) -> Path:
    return Path(str(resources.files("tclheom") / "data" / name))


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _strip_comments(obj):
    if isinstance(obj, dict):
        return {k: _strip_comments(v) for k, v in obj.items() if not k.startswith("_")}
    if isinstance(obj, list):
        return [_strip_comments(v) for v in obj]
    return obj


def load_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    return _strip_comments(data)


def _split_model_file(data: dict) -> dict:
    """Turn a bare exciton model file into {model, **run-defaults}."""
    run = data.pop("run", {})
    return _merge(run, {"model": dict(data, type="exciton")})


def resolve(raw: dict | None, overrides: dict | None = None, base_dir=None) -> dict:
    """Fill defaults, inline ``model_file`` and apply non-None flag overrides."""
    raw = copy.deepcopy(raw or {})
    if "dim" in raw and "h_matrix" in raw:
        raw = _split_model_file(raw)
    if "model_file" in raw:
        mpath = Path(raw.pop("model_file"))
        if base_dir is not None and not mpath.is_absolute():
            mpath = Path(base_dir) / mpath
        inner = load_json(mpath)
        if "dim" in inner:
            inner = _split_model_file(inner)
        raw = _merge(inner, raw)
    cfg = _merge(DEFAULTS, raw)
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        section, _, name = key.partition(".")
        if name:
            cfg.setdefault(section, {})[name] = val
        else:
            cfg[section] = val
    validate(cfg)
    return cfg


def _positive(cfg, section, name, integer=False):
    val = cfg[section][name]
    if integer:
        if not isinstance(val, int) or isinstance(val, bool) or val < 0:
            raise ConfigError(f"{section}.{name} must be a non-negative integer, got {val!r}")
    elif not isinstance(val, (int, float)) or not val > 0:
        raise ConfigError(f"{section}.{name} must be > 0, got {val!r}")


def validate(cfg: dict) -> None:
    _positive(cfg, "hierarchy", "depth", integer=True)
    k = cfg["hierarchy"]["matsubara"]
    if k is not None and (not isinstance(k, int) or k < 0):
        raise ConfigError(f"hierarchy.matsubara must be a non-negative integer, got {k!r}")
    _positive(cfg, "integrator", "dt")
    _positive(cfg, "integrator", "t_max")
    if cfg["integrator"]["t_max"] < cfg["integrator"]["dt"]:
        raise ConfigError("integrator.t_max must be >= integrator.dt")
    stride = cfg["integrator"]["record_stride"]
    if not isinstance(stride, int) or stride < 1:
        raise ConfigError(f"integrator.record_stride must be a positive integer, got {stride!r}")
    if cfg["generator"]["udot"] not in ("heom", "fd"):
        raise ConfigError("generator.udot must be 'heom' or 'fd'")
    n_max = cfg["expand"]["n_max"]
    if not isinstance(n_max, int) or n_max < 2 or n_max % 2:
        raise ConfigError(f"expand.n_max must be an even order >= 2 (odd orders vanish), got {n_max!r}")
    sw = cfg["sweep"]
    if not sw["eta_grid"] or any(not isinstance(e, (int, float)) or e < 0 for e in sw["eta_grid"]):
        raise ConfigError("sweep.eta_grid must be a non-empty list of non-negative numbers")
    for name in ("reference_order", "min_order", "max_order"):
        if not isinstance(sw[name], int) or sw[name] < 2 or sw[name] % 2:
            raise ConfigError(f"sweep.{name} must be an even order >= 2")
    if not sw["reference_order"] < sw["min_order"] <= sw["max_order"]:
        raise ConfigError("sweep orders must satisfy reference_order < min_order <= max_order")
    threads = cfg["threads"]
    if not isinstance(threads, int) or threads < 1:
        raise ConfigError(f"threads must be a positive integer, got {threads!r}")


def _bath_from(b: dict, where: str) -> BathSpec:
    if "eta" in b:
        eta = float(b["eta"])
    elif "lambda" in b:
        eta = 2.0 * float(b["lambda"])
    else:
        raise ConfigError(f"{where} needs 'eta' or 'lambda'")
    try:
        return BathSpec(eta, float(b["omega_c"]), float(b["beta"]), int(b.get("n_matsubara", 2)))
    except KeyError as exc:
        raise ConfigError(f"{where} is missing field {exc}") from exc
    except BathError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def build_model(cfg: dict) -> SystemModel:
    """Model described by a resolved config, with the Matsubara override applied."""
    spec = cfg.get("model")
    if not isinstance(spec, dict):
        raise ConfigError("config has no 'model' block")
    kind = spec.get("type", "exciton" if "h_matrix" in spec else "spin-boson")
    k_override = cfg["hierarchy"]["matsubara"]
    if kind == "spin-boson":
        bath = _bath_from(spec.get("bath", {}), "model.bath")
        if k_override is not None:
            bath = bath.replace(n_matsubara=k_override)
        try:
            return build_spin_boson(SpinBosonParams(float(spec.get("epsilon", 0.0)),
                                                    float(spec.get("delta", 1.0)), bath))
        except (ValueError, BathError) as exc:
            raise ConfigError(str(exc)) from exc
    if kind == "exciton":
        body = {k: v for k, v in spec.items() if k != "type"}
        try:
            model = exciton_model_from_dict(body)
        except (ModelConfigError, BathError, TypeError, ValueError) as exc:
            raise ConfigError(f"model: {exc}") from exc
        if k_override is not None:
            try:
                model = model.with_baths(tuple(b.replace(n_matsubara=k_override) for b in model.baths))
            except BathError as exc:
                raise ConfigError(str(exc)) from exc
        return model
    raise ConfigError(f"unknown model type {kind!r}")


def initial_state_index(cfg: dict, dim: int) -> int:
    state = cfg["initial"]["state"]
    if not isinstance(state, int) or not 1 <= state <= dim:
        raise ConfigError(f"initial.state must be in 1..{dim}, got {state!r}")
    return state - 1
