"""JSON run configuration: schema, defaults and validation."""
from __future__ import annotations

import copy
import json
import math
from pathlib import Path

import jsonschema

from .integrator import ConfigError, Forcing, SimConfig, state_from_spec
from .noise import NoiseAdmissibilityError, NoiseModel, validate_noise
from .operators import PhysicsParams
from .spectral import LatticeError, alias_bound, make_lattice

SCHEMA_VERSION = 1

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "L": 2 * math.pi,
    "physics": {"nu1": 1.0, "nu2": 1.0, "s_hartmann": 1.0, "eps_hall": 1.0},
    "dynamics": {"convection": True, "hall": True, "scheme": "exponential", "c_cfl": 1.0},
    "noise": {"directions": [], "certificate": None},
    "forcing": {"kind": "none"},
    "R_guard": None,
    "seed": 0,
    "n_paths": 1,
    "chunk_size": 16,
    "record": {"snapshot_stride": 0, "snapshot_times": [], "test_functions": []},
}

_terms = {"type": "array", "items": {
    "type": "object", "required": ["m"], "additionalProperties": False,
    "properties": {"m": {"type": "array", "items": {"type": "integer"}, "minItems": 3, "maxItems": 3},
                   "cos": {"type": "number"}, "sin": {"type": "number"}}}}

_field = {"type": "object", "required": ["kind"], "properties": {
    "kind": {"enum": ["zero", "single_mode", "random_solenoidal"]},
    "m": {"type": "array", "items": {"type": "integer"}, "minItems": 3, "maxItems": 3},
    "amplitude": {"type": "number"},
    "polarization": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
    "phase": {"enum": ["cos", "sin"]},
    "seed": {"type": "integer", "minimum": 0},
    "decay": {"type": "number"},
    "n0": {"type": "number", "exclusiveMinimum": 0}},
    "additionalProperties": False}

_state = {"oneOf": [
    {"type": "object", "properties": {"u": _field, "B": _field}, "additionalProperties": False,
     "minProperties": 1},
    _field,
]}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["N", "n", "T", "dt", "X0"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "N": {"type": "integer", "minimum": 4, "multipleOf": 2},
        "L": {"type": "number", "exclusiveMinimum": 0},
        "n": {"type": "number", "minimum": 0},
        "T": {"type": "number", "exclusiveMinimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "X0": _state,
        "physics": {"type": "object", "additionalProperties": False, "properties": {
            "nu1": {"type": "number", "exclusiveMinimum": 0},
            "nu2": {"type": "number", "exclusiveMinimum": 0},
            "s_hartmann": {"type": "number"},
            "eps_hall": {"type": "number", "minimum": 0}}},
        "dynamics": {"type": "object", "additionalProperties": False, "properties": {
            "convection": {"type": "boolean"}, "hall": {"type": "boolean"},
            "scheme": {"enum": ["exponential", "explicit"]},
            "c_cfl": {"type": "number", "exclusiveMinimum": 0}}},
        "noise": {"type": "object", "additionalProperties": False, "properties": {
            "directions": {"type": "array", "items": {
                "type": "object", "required": ["field"], "additionalProperties": False,
                "properties": {"field": {"enum": [1, 2]}, "j": {"type": "integer", "minimum": 0},
                               "b": {"type": "array", "items": _terms, "minItems": 3, "maxItems": 3},
                               "c": _terms}}},
            "certificate": {"oneOf": [{"type": "null"}, {
                "type": "object", "required": ["eta", "lambda"], "additionalProperties": False,
                "properties": {"eta": {"type": "number"}, "lambda": {"type": "number"},
                               "varrho": {"type": "number"}}}]}}},
        "forcing": {"type": "object", "required": ["kind"], "properties": {
            "kind": {"enum": ["none", "steady_mode"]},
            "m": {"type": "array", "items": {"type": "integer"}, "minItems": 3, "maxItems": 3},
            "amplitude": {"type": "number"},
            "polarization": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
            "omega": {"type": "number"}, "u": _field, "B": _field}, "additionalProperties": False},
        "R_guard": {"type": ["number", "null"], "minimum": 0},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "n_paths": {"type": "integer", "minimum": 1},
        "chunk_size": {"type": "integer", "minimum": 1},
        "record": {"type": "object", "additionalProperties": False, "properties": {
            "snapshot_stride": {"type": "integer", "minimum": 0},
            "snapshot_times": {"type": "array", "items": {"type": "number", "minimum": 0}},
            "test_functions": {"type": "array", "items": _state}}},
        "moments": {"type": "object", "additionalProperties": False, "properties": {
            "p": {"type": "number", "minimum": 2},
            "q_list": {"type": "array", "items": {"type": "number"}}}},
        "aldous": {"type": "object", "additionalProperties": False, "properties": {
            "thetas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
            "base_times": {"type": "array", "items": {"type": "number", "minimum": 0}},
            "m": {"type": "number", "minimum": 0}}},
        "sweep": {"type": "object", "additionalProperties": False, "properties": {
            "n_values": {"type": "array", "items": {"type": "number", "minimum": 0}},
            "dt_values": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}}}},
        "threads": {"type": "integer", "minimum": 1},
    },
}


def _merge(defaults: dict, given: dict) -> dict:
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _path(err: jsonschema.ValidationError) -> str:
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def resolve(raw: dict, *, strict_noise: bool = True) -> tuple[SimConfig, dict]:
    """Validate a config mapping and build the simulation config.

    Returns the config and the fully resolved mapping (defaults expanded).
    """
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        msg = "; ".join(f"{_path(e)}: {e.message}" for e in errors)
        raise ConfigError(f"config schema violation: {msg}")
    cfg = _merge(DEFAULTS, raw)
    N, L, n = cfg["N"], float(cfg["L"]), float(cfg["n"])
    bound = alias_bound(N, L)
    if n > bound * (1 + 1e-12):
        raise ConfigError(f"n: cut-off {n} exceeds the alias bound pi(N-1)/L = {bound:.6g}")
    try:
        lat = make_lattice(N, L, n)
    except LatticeError as e:
        raise ConfigError(str(e)) from e
    ph = cfg["physics"]
    params = PhysicsParams(ph["nu1"], ph["nu2"], ph["s_hartmann"], ph["eps_hall"])
    noise = NoiseModel.from_config(L, cfg["noise"]["directions"], cfg["noise"]["certificate"])
    report = None
    if not noise.is_zero:
        try:
            report = validate_noise(noise, params, strict=strict_noise)
        except NoiseAdmissibilityError as e:
            raise ConfigError(f"noise: {e}") from e
    try:
        X0 = state_from_spec(lat, cfg["X0"])
        rec = cfg["record"]
        tests = tuple(state_from_spec(lat, s) for s in rec["test_functions"])
        dyn = cfg["dynamics"]
        sim = SimConfig(
            lattice=lat, params=params, T=float(cfg["T"]), dt=float(cfg["dt"]), X0=X0,
            noise=None if noise.is_zero else noise,
            forcing=Forcing.from_spec(lat, cfg["forcing"]),
            R_guard=cfg["R_guard"], seed=int(cfg["seed"]), n_paths=int(cfg["n_paths"]),
            convection=dyn["convection"], hall=dyn["hall"], scheme=dyn["scheme"], c_cfl=dyn["c_cfl"],
            chunk_size=int(cfg["chunk_size"]), snapshot_stride=int(rec["snapshot_stride"]),
            snapshot_times=tuple(float(t) for t in rec["snapshot_times"]), test_functions=tests,
        )
    except (LatticeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    if report is not None:
        cfg["noise"]["admissibility"] = report.as_dict()
    return sim, cfg


def parse_config(path: str | Path) -> SimConfig:
    return load(path)[0]


def load(path: str | Path) -> tuple[SimConfig, dict]:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} not found")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return resolve(raw)
