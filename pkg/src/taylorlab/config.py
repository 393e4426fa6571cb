"""Run configuration: a nested YAML file, with command-line overrides."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass

import yaml

from .cross_section import (CrossSectionSpec, ShearField, build_spectrum, decompose_shear,
                            field_from_spectral_json, named_profile, profile_from_csv)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

DEFAULTS: dict = {
    "cross_section": {"family": "interval", "modes": 16, "resolution": None, "aspect": 1.0,
                      "data": None},
    "profile": {"name": "cosine", "params": {"amplitudes": [1.0]}, "csv": None,
                "spectral_json": None},
    "nu": [0.1],
    "seed": 0,
    "parallel": 1,
    "out": "runs",
    "spectrum": {"points": 64, "kappa_max": None, "separation_points": 65},
    "manifold": {"order": 5, "probes": 100, "trajectories": 3, "tau_max": 40.0},
    "grid": {"K": 1024, "extent": None},
    "initial": {"kind": "modulated", "mass": 1.0, "width": 1.0, "shift": 0.0, "modulation": 0.5},
    "time": {"T0": 0.05, "T_max": 100.0, "ratio": 1.25},
    "dispersion": {"N": 4, "moments": "exact"},
    "hypo": {"kappa0": None, "delta": 0.1, "kappa1": 1.0, "samples": 32, "T_max": 10.0,
             "rate": "corrected", "nu": [0.02, 0.05, 0.1], "probes": 1000},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, upd: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for k, v in upd.items():
        if k not in base:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(base[k], dict) and k != "params" and k != "data":
            if not isinstance(v, dict):
                raise ConfigError(f"config key {path + k!r} must be a mapping")
            out[k] = _merge(base[k], v, path + k + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class RunConfig:
    data: dict

    def __getitem__(self, key):
        return self.data[key]

    @property
    def nus(self) -> list[float]:
        return [float(v) for v in self.data["nu"]]

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.data, sort_keys=True).encode()).hexdigest()

    def spectrum(self):
        cs = self.data["cross_section"]
        spec = CrossSectionSpec(cs["family"], int(cs["modes"]), cs["resolution"], float(cs["aspect"]))
        return build_spectrum(spec, cs["data"])

    def shear(self, spectrum) -> ShearField:
        p = self.data["profile"]
        if p["spectral_json"]:
            return field_from_spectral_json(p["spectral_json"])
        if p["csv"]:
            return decompose_shear(profile_from_csv(p["csv"], spectrum), spectrum)
        return decompose_shear(named_profile(p["name"], spectrum, **(p["params"] or {})), spectrum)


def validate(d: dict) -> None:
    nus = d["nu"]
    if not isinstance(nus, list) or not nus:
        raise ConfigError("nu must be a non-empty list of positive numbers")
    for v in list(nus) + list(d["hypo"]["nu"]):
        if not isinstance(v, (int, float)) or v <= 0:
            raise ConfigError(f"viscosity {v!r} must be a positive number")
    if int(d["cross_section"]["modes"]) < 1:
        raise ConfigError("modes must be a positive integer")
    if int(d["manifold"]["order"]) < 1:
        raise ConfigError("manifold order must be at least 1")
    h = d["hypo"]
    if not 0 < float(h["delta"]) < 0.25:
        raise ConfigError(f"hypo.delta = {h['delta']} outside (0, 1/4)")
    if float(h["kappa1"]) <= 0:
        raise ConfigError("hypo.kappa1 must be positive")
    if not (h["rate"] in ("uncorrected", "corrected") or isinstance(h["rate"], (int, float))):
        raise ConfigError("hypo.rate must be 'uncorrected', 'corrected' or a number")
    t = d["time"]
    if not (0 < float(t["T0"]) < float(t["T_max"])) or float(t["ratio"]) <= 1:
        raise ConfigError("time schedule needs 0 < T0 < T_max and ratio > 1")
    if int(d["grid"]["K"]) < 8:
        raise ConfigError("grid.K must be at least 8")
    if int(d["dispersion"]["N"]) < 0:
        raise ConfigError("dispersion.N must be non-negative")
    if d["dispersion"]["moments"] not in ("exact", "fd"):
        raise ConfigError("dispersion.moments must be 'exact' or 'fd'")
    if int(d["parallel"]) < 1:
        raise ConfigError("parallel must be at least 1")
    if d["initial"]["kind"] not in ("blob", "shifted", "modulated", "self_similar"):
        raise ConfigError(f"unknown initial datum {d['initial']['kind']!r}")


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    d = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a mapping")
        d = _merge(d, raw)
    if overrides:
        d = _merge(d, overrides)
    if not isinstance(d["nu"], list):
        d["nu"] = [d["nu"]]
    validate(d)
    return RunConfig(d)
