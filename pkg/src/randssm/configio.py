"""Config files and run manifests.

Configs are YAML mappings; a run manifest is also YAML and carries the
fully resolved config under its ``config`` key, so any manifest can be
fed back as a config file and reproduces the run.  All values are plain
scalars and lists for diff-ability.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np
import yaml

from .ensemble import ExperimentConfig, ExperimentReport
from .errors import ConfigError


def load_config(path) -> dict:
    """Read a YAML config; a manifest is accepted via its config section."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(
            f"config {path} must be a mapping, not {type(data).__name__}")
    if "config" in data and isinstance(data["config"], dict):
        return data["config"]
    return data


def _as_float(value, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"key {key!r} expects a number, "
                          f"got {type(value).__name__}")
    return float(value)


def _as_int(value, key: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"key {key!r} expects an integer, "
                          f"got {type(value).__name__}")
    return int(value)


def _as_bool(value, key: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"key {key!r} expects true/false, "
                          f"got {type(value).__name__}")
    return value


def _as_str(value, key: str) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"key {key!r} expects a string, "
                          f"got {type(value).__name__}")
    return value


def _as_str_tuple(value, key: str) -> tuple:
    if isinstance(value, str):
        value = [p for p in value.split(",") if p]
    if not isinstance(value, (list, tuple)) or not all(
            isinstance(p, str) for p in value):
        raise ConfigError(f"key {key!r} expects a list of strings, "
                          f"got {value!r}")
    return tuple(value)


def _opt(coerce: Callable) -> Callable:
    def inner(value, key):
        return None if value is None else coerce(value, key)
    return inner


#: coercer per experiment-config key; the single source of truth for what
#: a simulate config may contain
EXPERIMENT_KEYS = {
    "model": _as_str,
    "epsilon": _as_float,
    "m": _as_int,
    "T": _as_float,
    "dt": _as_float,
    "order": _as_int,
    "include_h1": _as_bool,
    "seed": _as_int,
    "observables": _opt(_as_str_tuple),
    "workers": _as_int,
    "discard": _opt(_as_float),
    "variants": _as_str_tuple,
    "method": _opt(_as_str),
    "keep_signals": _as_bool,
}

REQUIRED_EXPERIMENT_KEYS = ("model", "epsilon", "m", "T", "dt")


def experiment_from_mapping(data: dict) -> ExperimentConfig:
    """Validate a config mapping and build the experiment config.

    Unknown keys and wrong types raise :class:`ConfigError` naming the
    offending key.
    """
    unknown = sorted(set(data) - set(EXPERIMENT_KEYS))
    if unknown:
        raise ConfigError(
            f"unknown config keys {unknown}; valid keys are "
            f"{sorted(EXPERIMENT_KEYS)}")
    missing = [k for k in REQUIRED_EXPERIMENT_KEYS if data.get(k) is None]
    if missing:
        raise ConfigError(f"missing required config keys {missing}")
    kwargs = {}
    for key, value in data.items():
        coerced = EXPERIMENT_KEYS[key](value, key)
        if coerced is not None or key in ("observables", "discard",
                                          "method"):
            kwargs[key] = coerced
    return ExperimentConfig(**kwargs)


def experiment_to_mapping(cfg: ExperimentConfig) -> dict:
    """Plain-scalar mapping of a config, ready for YAML."""
    out = {
        "model": cfg.model,
        "epsilon": float(cfg.epsilon),
        "m": int(cfg.m),
        "T": float(cfg.T),
        "dt": float(cfg.dt),
        "order": int(cfg.order),
        "include_h1": bool(cfg.include_h1),
        "seed": int(cfg.seed),
        "observables": (None if cfg.observables is None
                        else list(cfg.observables)),
        "workers": int(cfg.workers),
        "discard": None if cfg.discard is None else float(cfg.discard),
        "variants": list(cfg.variants),
        "method": cfg.method,
        "keep_signals": bool(cfg.keep_signals),
    }
    return out


def resolve_settings(keys: dict, defaults: dict, file_cfg: dict,
                     flags: dict) -> dict:
    """Layer defaults, config file, then explicit flags; validate keys.

    ``flags`` entries that are None mean "not given on the command line"
    and never override the file.
    """
    unknown = sorted(set(file_cfg) - set(keys))
    if unknown:
        raise ConfigError(
            f"unknown config keys {unknown}; valid keys are {sorted(keys)}")
    merged = dict(defaults)
    merged.update(file_cfg)
    for key, value in flags.items():
        if value is not None:
            merged[key] = value
    out = {}
    for key, value in merged.items():
        out[key] = None if value is None else keys[key](value, key)
    return out


def _plain(value):
    """Recursively convert numpy scalars and tuples for YAML output."""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, complex):
        return [float(value.real), float(value.imag)]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    return value


SEED_DERIVATION = ("numpy SeedSequence(entropy=master_seed, "
                   "spawn_key=(realization_index,))")


def write_manifest(path, *, command: str, config: dict,
                   artifacts: list,
                   report: Optional[ExperimentReport] = None,
                   extra: Optional[dict] = None) -> str:
    """Write the run manifest next to the artifacts it describes."""
    doc = {
        "command": command,
        "config": _plain(config),
        "artifacts": sorted(str(a) for a in artifacts),
    }
    if "seed" in config:
        doc["seed_derivation"] = SEED_DERIVATION
    if report is not None:
        doc["realization_seeds"] = [list(s) for s in report.realization_seeds]
        doc["noise_sha256"] = _plain(report.noise_hashes)
        doc["wall_times_s"] = _plain(
            {k: round(v, 6) for k, v in report.wall_times.items()})
        doc["discard_s"] = float(report.discard)
        doc["ssm"] = _plain(report.ssm_info)
        doc["noise_pairing"] = (
            "each realization index reuses one noise path across the "
            "full, reduced, and simulated-linear variants")
    if extra:
        doc.update(_plain(extra))
    text = yaml.safe_dump(doc, sort_keys=False, default_flow_style=False)
    with open(path, "w") as fh:
        fh.write(text)
    return str(path)
