"""Schema-checked experiment configuration for the command-line tools.

A config is a flat JSON object. Physical quantities carry their unit in the
key (``_GHz``, ``_ns``). Unknown keys, wrong types and missing required keys
raise :class:`ConfigError`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from qutrit_pareto.dynamics import PhysicsConstants
from qutrit_pareto.pulses import (
    MODEL_NAMES,
    DetuningParams,
    EnvelopeKind,
    EnvelopeParams,
    PulseModel,
    split_name,
    validate,
)

SCHEMA_VERSION = 1
REQUIRED = object()


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class Key:
    kind: str  # float | int | bool | str | floats | strs | float_or_floats | str_or_strs
    default: Any = None
    help: str = ""


PHYSICS_KEYS = {
    "E_C_GHz": Key("float", 0.3, "anharmonicity E_C/h"),
    "coupling_ratio": Key("float", math.sqrt(2.0), "e-f over g-e coupling ratio"),
    "detuning_sign": Key("float", -1.0, "orientation of the detuning in the Hamiltonian (+1 or -1)"),
    "rtol": Key("float", 5e-10, "integrator relative tolerance"),
    "atol": Key("float", 1e-12, "integrator absolute tolerance"),
}

PULSE_KEYS = {
    "model": Key("str", REQUIRED, "model name, e.g. SECH3"),
    "T_ns": Key("float", REQUIRED, "pulse duration"),
    "omega0_GHz": Key("float", REQUIRED, "peak Rabi amplitude"),
    "n": Key("float", REQUIRED, "envelope exponent"),
    "beta": Key("float", None, "super-Gaussian shape (SG models)"),
    "epsilon": Key("float", None, "sech shape (SECH models)"),
    "k_GHz": Key("floats", REQUIRED, "detuning amplitudes k1..k5"),
    "gamma": Key("floats", [], "detuning rates gamma1, gamma2"),
    "delta_GHz": Key("float", 0.0, "static detuning offset"),
}

COMMON_KEYS = {
    "schema_version": Key("int", SCHEMA_VERSION, "config schema version"),
    "out_dir": Key("str", REQUIRED, "output directory"),
}

SCAN_KEYS = {
    "scan_lo_GHz": Key("float", -0.3, "detuning scan lower edge"),
    "scan_hi_GHz": Key("float", 0.3, "detuning scan upper edge"),
    "scan_step_GHz": Key("float", 1e-3, "detuning scan coarse step"),
    "scan_xtol_GHz": Key("float", 1e-5, "crossing refinement tolerance"),
}

AMP_KEYS = {
    "amp_lo_GHz": Key("float", 1e-3, "amplitude scan lower edge"),
    "amp_hi_GHz": Key("float", 0.3, "amplitude scan upper edge"),
    "amp_points": Key("int", 400, "amplitude scan points"),
    "amp_log_spaced": Key("bool", True, "log-spaced amplitude grid"),
    "amp_delta_GHz": Key("float", 0.0, "fixed offset for amplitude scans"),
    "amp_xtol_GHz": Key("float", 1e-5, "amplitude crossing refinement tolerance"),
}

SCHEMAS: dict[str, dict[str, Key]] = {
    "simulate": {**COMMON_KEYS, **PHYSICS_KEYS, **PULSE_KEYS, "n_points": Key("int", 2001, "reporting grid size")},
    "scan": {
        **COMMON_KEYS,
        **PHYSICS_KEYS,
        **PULSE_KEYS,
        **SCAN_KEYS,
        **AMP_KEYS,
        "axis": Key("str", "detuning", "detuning | amplitude"),
    },
    "pareto": {
        **COMMON_KEYS,
        **PHYSICS_KEYS,
        **SCAN_KEYS,
        **AMP_KEYS,
        "family": Key("str_or_strs", REQUIRED, "model family or list of families"),
        "T_ns": Key("float_or_floats", REQUIRED, "duration or list of durations"),
        "seed": Key("int", REQUIRED, "random seed"),
        "population": Key("int", 96, "population size (even, >= 8)"),
        "generations": Key("int", None, "generation budget (default 60 below 100 ns, else 80)"),
        "crossover_prob": Key("float", 0.9, "SBX crossover probability"),
        "eta_crossover": Key("float", 15.0, "SBX distribution index"),
        "mutation_prob": Key("float", None, "per-gene mutation probability (default 1/genes)"),
        "eta_mutation": Key("float", 20.0, "polynomial mutation index"),
        "stagnation_window": Key("int", 25, "hypervolume stagnation window"),
        "stagnation_rtol": Key("float", 1e-6, "hypervolume stagnation tolerance"),
        "densify": Key("int", 0, "densify rank-1 fronts to this many points (0 = off)"),
        "densify_generations": Key("int", 10, "generations of the densifying re-run"),
        "amp_rob": Key("bool", False, "attach amplitude robustness to front entries"),
    },
    "lz": {
        **COMMON_KEYS,
        **PHYSICS_KEYS,
        **{k: Key(v.kind, None if v.default is REQUIRED else v.default, v.help) for k, v in PULSE_KEYS.items()},
        "archive_dirs": Key("strs", [], "Pareto run directories whose fronts feed the band"),
        "p_thresh": Key("float", 0.99, "transfer threshold"),
        "lz_step_GHz": Key("float", 1e-3, "outward walk step"),
        "lz_xtol_GHz": Key("float", 1e-5, "boundary refinement tolerance"),
        "band_bins": Key("int", 20, "bins of the min/max band envelope"),
    },
    "morris": {
        **COMMON_KEYS,
        **PHYSICS_KEYS,
        **SCAN_KEYS,
        **AMP_KEYS,
        "archive_dirs": Key("strs", REQUIRED, "Pareto run directories"),
        "outputs": Key("strs", ["max_pf", "det_rob", "amp_rob"], "outputs to screen"),
        "N": Key("int", 175, "base points per front"),
        "rel_step": Key("float", 5e-5, "relative decrease of each gene"),
        "signed_step": Key("bool", False, "divide by the signed rather than the magnitude step"),
    },
}
SCHEMAS["morris"]["scan_xtol_GHz"] = Key("float", 1e-10, "crossing refinement tolerance")
SCHEMAS["morris"]["amp_xtol_GHz"] = Key("float", 1e-10, "amplitude crossing refinement tolerance")


def _coerce(name: str, kind: str, value: Any) -> Any:
    def fail():
        return ConfigError(f"key {name!r}: expected {kind}, got {value!r}")

    if value is None:
        return None
    if kind == "float":
        if isinstance(value, bool):
            raise fail()
        try:
            out = float(value)
        except (TypeError, ValueError):
            raise fail() from None
        if not math.isfinite(out):
            raise fail()
        return out
    if kind == "int":
        if isinstance(value, bool):
            raise fail()
        if isinstance(value, float) and not value.is_integer():
            raise fail()
        try:
            return int(value)
        except (TypeError, ValueError):
            raise fail() from None
    if kind == "bool":
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "1", "yes", "false", "0", "no"):
            return value.lower() in ("true", "1", "yes")
        raise fail()
    if kind == "str":
        if not isinstance(value, str):
            raise fail()
        return value
    if kind in ("floats", "float_or_floats"):
        if isinstance(value, str):
            value = [v for v in value.split(",") if v.strip()]
        if isinstance(value, (list, tuple)):
            return [_coerce(name, "float", v) for v in value]
        if kind == "float_or_floats":
            return [_coerce(name, "float", value)]
        raise fail()
    if kind in ("strs", "str_or_strs"):
        if isinstance(value, str):
            return [v.strip() for v in value.split(",") if v.strip()]
        if isinstance(value, (list, tuple)) and all(isinstance(v, str) for v in value):
            return list(value)
        raise fail()
    raise ConfigError(f"key {name!r}: unknown schema kind {kind}")


def resolve(command: str, file_values: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    """Merge file values and flag overrides (flags win) against the command's schema."""
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    schema = SCHEMAS[command]
    merged = {**file_values, **{k: v for k, v in overrides.items() if v is not None}}
    unknown = sorted(set(merged) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
    out: dict[str, Any] = {}
    for name, key in schema.items():
        if name in merged:
            out[name] = _coerce(name, key.kind, merged[name])
        elif key.default is REQUIRED:
            raise ConfigError(f"missing required config key {name!r}")
        else:
            out[name] = key.default
    if out["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {out['schema_version']} (expected {SCHEMA_VERSION})")
    return out


def load_file(path: str | Path | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def physics_from(cfg: dict[str, Any]) -> PhysicsConstants:
    if cfg["detuning_sign"] not in (1.0, -1.0):
        raise ConfigError("detuning_sign must be +1 or -1")
    if cfg["E_C_GHz"] < 0 or cfg["coupling_ratio"] < 0:
        raise ConfigError("E_C_GHz and coupling_ratio must be nonnegative")
    if not (cfg["rtol"] > 0 and cfg["atol"] > 0):
        raise ConfigError("rtol and atol must be positive")
    return PhysicsConstants(cfg["E_C_GHz"], cfg["coupling_ratio"], cfg["detuning_sign"])


def model_from(cfg: dict[str, Any]) -> PulseModel:
    """Build and validate the pulse described by the pulse keys."""
    name = cfg.get("model")
    for key in ("model", "T_ns", "omega0_GHz", "n", "k_GHz"):
        if cfg.get(key) is None:
            raise ConfigError(f"missing required config key {key!r}")
    if name not in MODEL_NAMES:
        raise ConfigError(f"key 'model': unknown model {name!r}; expected one of {', '.join(MODEL_NAMES)}")
    env_kind, det_kind = split_name(name)
    shape_key = "beta" if env_kind is EnvelopeKind.SUPER_GAUSSIAN else "epsilon"
    other = "epsilon" if shape_key == "beta" else "beta"
    if cfg.get(shape_key) is None:
        raise ConfigError(f"missing required config key {shape_key!r} for model {name}")
    if cfg.get(other) is not None:
        raise ConfigError(f"key {other!r} does not apply to model {name}")
    model = PulseModel(
        name,
        EnvelopeParams(env_kind, cfg["omega0_GHz"], cfg["n"], cfg[shape_key]),
        DetuningParams(det_kind, tuple(cfg["k_GHz"]), tuple(cfg.get("gamma") or ())),
        cfg["T_ns"],
        cfg.get("delta_GHz") or 0.0,
    )
    violations = validate(model)
    if violations:
        raise ConfigError("invalid pulse: " + "; ".join(str(v) for v in violations))
    return model
