"""JSON run configuration: schema, defaults and conversion to model objects."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

from .model import CoefficientSpec, ConstraintSpec, ModelError
from .rng import InitialLawSpec
from .scheme import ControlPath, DriverSpec, Profile, TimeGrid

__all__ = ["ConfigError", "SCHEMA", "DEFAULTS", "load_config", "resolve", "build_model",
           "build_grid", "build_driver", "build_control"]


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


_num = {"type": "number"}
_int = {"type": "integer"}
_profile = {
    "type": "object",
    "required": ["kind", "params"],
    "properties": {"kind": {"enum": ["constant", "ramp", "sinusoid"]},
                   "params": {"type": "array", "items": _num}},
}
_law = {
    "type": "object",
    "required": ["kind", "params"],
    "properties": {"kind": {"enum": ["point", "gaussian", "uniform"]},
                   "params": {"type": "array", "items": _num}},
}

SCHEMA = {
    "type": "object",
    "required": ["model", "grid"],
    "properties": {
        "model": {
            "type": "object",
            "properties": {
                "drift": {"type": "object", "properties": {
                    "theta0": _num, "theta1": _num, "theta2": _num}},
                "diffusion": {"type": "object", "properties": {
                    "eta0": _num, "eta1": _num, "eta2": _num, "state_free": {"type": "boolean"}}},
                "constraint": {"type": "object", "properties": {
                    "family": {"enum": ["identity", "affine", "sine"]}, "param": _num}},
                "initial": _law,
                "noise_scale": {"type": "number", "minimum": 0},
                "harnack": {"enum": [None, "log", "shift"]},
                "state_box": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
            },
        },
        "grid": {
            "type": "object",
            "required": ["t_end", "dt"],
            "properties": {"t_end": {"type": "number", "exclusiveMinimum": 0},
                           "dt": {"type": "number", "exclusiveMinimum": 0}},
        },
        "particles": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": ["string", "null"]},
        "simulate": {"type": "object", "properties": {
            "snapshot_every": {"type": "integer", "minimum": 0},
            "track": {"type": "integer", "minimum": 0}}},
        "density": {"type": "object", "properties": {
            "band_epsilon": {"type": ["number", "null"], "exclusiveMinimum": 0},
            "snapshot_every": {"type": "integer", "minimum": 1},
            "window": {"type": "integer", "minimum": 1}}},
        "control": {"type": "object", "required": ["kind"], "properties": {
            "kind": {"enum": ["zero", "constant", "sinusoid", "table"]},
            "params": {"type": "array", "items": _num}}},
        "chaos": {"type": "object", "properties": {
            "sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2},
            "n_ref": {"type": "integer", "minimum": 1},
            "replicates": {"type": "integer", "minimum": 1},
            "max_tracked": {"type": "integer", "minimum": 1}}},
        "stability_init": {"type": "object", "properties": {
            "base_point": _num,
            "deltas": {"type": "array", "items": _num, "minItems": 2}}},
        "stability_coeff": {"type": "object", "properties": {
            "lambdas": {"type": "array", "items": _num, "minItems": 2}}},
        "stability_driver": {"type": "object", "properties": {
            "drivers": {"type": "array", "minItems": 2, "items": {
                "type": "object", "properties": {"a": _profile, "m": _profile}}}}},
        "small_noise": {"type": "object", "properties": {
            "eps_list": {"type": "array", "items": {"type": "number", "minimum": 0},
                         "minItems": 2}}},
        "ldp_control": {"type": "object", "properties": {
            "freqs": {"type": "array", "items": _int, "minItems": 2}}},
        "contraction": {"type": "object", "properties": {"init_a": _num, "init_b": _num}},
        "invariant": {"type": "object", "properties": {"other_initial": _law}},
        "harnack": {"type": "object", "properties": {
            "x0": _num, "y0": _num, "v": _num,
            "p": {"type": "number", "exclusiveMinimum": 1},
            "f": {"type": "string"}}},
    },
}

DEFAULTS = {
    "model": {
        "drift": {"theta0": 0.0, "theta1": -1.0, "theta2": 0.0},
        "diffusion": {"eta0": 1.0, "eta1": 0.0, "eta2": 0.0, "state_free": False},
        "constraint": {"family": "identity", "param": 0.0},
        "initial": {"kind": "point", "params": [0.0]},
        "noise_scale": 1.0,
        "harnack": None,
        "state_box": [-10.0, 10.0],
    },
    "particles": 1000,
    "seed": 0,
    "output_dir": None,
    "simulate": {"snapshot_every": 0, "track": 0},
    "density": {"band_epsilon": None, "snapshot_every": 1, "window": 1},
    "control": {"kind": "zero", "params": []},
    "chaos": {"sizes": [64, 128, 256, 512, 1024, 2048, 4096], "n_ref": 16384,
              "replicates": 16, "max_tracked": 256},
    "stability_init": {"base_point": 1.0, "deltas": [0.4, 0.2, 0.1, 0.05]},
    "stability_coeff": {"lambdas": [0.2, 0.1, 0.05]},
    "stability_driver": {"drivers": [
        {"a": {"kind": "constant", "params": [1.0]},
         "m": {"kind": "sinusoid", "params": [1.0, 1.0 / k, 1.0]}} for k in (1, 2, 4)]},
    "small_noise": {"eps_list": [0.1, 0.01, 0.001]},
    "ldp_control": {"freqs": [2, 4, 8, 16]},
    "contraction": {"init_a": 2.0, "init_b": 1.0},
    "invariant": {"other_initial": {"kind": "point", "params": [3.0]}},
    "harnack": {"x0": 0.0, "y0": 0.5, "v": 0.5, "p": 2.0, "f": "shifted-tanh"},
}


def _merge(defaults: dict, given: dict) -> dict:
    out = copy.deepcopy(defaults)
    for key, val in given.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _field_path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        missing = err.message.split("'")[1]
        parts.append(missing)
    return ".".join(parts)


def resolve(raw: dict) -> dict:
    """Validate a config document and fill every default.

    A run summary (which embeds its resolved config under ``"config"``) is
    accepted as well, so any run can be replayed from its own output.
    """
    if not isinstance(raw, dict):
        raise ConfigError("", "config must be a JSON object")
    if "config" in raw and "experiment" in raw:
        raw = raw["config"]
    errors = sorted(jsonschema.Draft7Validator(SCHEMA).iter_errors(raw),
                    key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(_field_path(err), err.message)
    return _merge(DEFAULTS, raw)


def load_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("", f"cannot read config {path}: {exc}") from exc
    return resolve(raw)


def _law(block: dict, field: str) -> InitialLawSpec:
    try:
        return InitialLawSpec(block["kind"], tuple(block["params"]))
    except ValueError as exc:
        raise ConfigError(field, str(exc)) from exc


def build_model(cfg: dict) -> CoefficientSpec:
    m = cfg["model"]
    d, s, c = m["drift"], m["diffusion"], m["constraint"]
    try:
        constraint = ConstraintSpec(c["family"], float(c["param"]))
    except ModelError as exc:
        raise ConfigError("model.constraint", str(exc)) from exc
    try:
        return CoefficientSpec(
            theta=(d["theta0"], d["theta1"], d["theta2"]),
            eta=(s["eta0"], s["eta1"], s["eta2"]),
            constraint=constraint,
            initial=_law(m["initial"], "model.initial"),
            noise_scale=m["noise_scale"],
            state_free=s["state_free"],
            harnack=m["harnack"],
            state_box=tuple(m["state_box"]),
        )
    except ModelError as exc:
        raise ConfigError("model", str(exc)) from exc


def build_grid(cfg: dict, t_end=None) -> TimeGrid:
    g = cfg["grid"]
    try:
        return TimeGrid(float(t_end if t_end is not None else g["t_end"]), float(g["dt"]))
    except ValueError as exc:
        raise ConfigError("grid", str(exc)) from exc


def build_driver(block: dict, field: str) -> DriverSpec:
    try:
        a = block.get("a", {"kind": "constant", "params": [1.0]})
        m = block.get("m", {"kind": "constant", "params": [1.0]})
        return DriverSpec(Profile(a["kind"], tuple(a["params"])),
                          Profile(m["kind"], tuple(m["params"])))
    except ValueError as exc:
        raise ConfigError(field, str(exc)) from exc


def build_control(cfg: dict, grid: TimeGrid) -> ControlPath:
    c = cfg["control"]
    try:
        return ControlPath(c["kind"], tuple(c.get("params", ())), grid.t_end)
    except ValueError as exc:
        raise ConfigError("control", str(exc)) from exc
