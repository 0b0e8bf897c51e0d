"""Closed, flat configuration schema with dotted section keys.

Configs are JSON objects mapping dotted keys to numbers, e.g.
``{"cavity.kappa_MHz": 2.6, "loading.p": 0.6}``. Missing keys fall back to the
``paper-2024`` preset; unknown keys are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .loading import LoadingConfig, calibrate_survival
from .physics import CavityParams, DomainError, TweezerParams


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


PAPER_2024: dict[str, float | int | None] = {
    "cavity.g0_max_MHz": 3.4,
    "cavity.kappa_MHz": 2.6,
    "cavity.gamma_MHz": 1.1,
    "cavity.lambda_probe_nm": 852.0,
    "cavity.lambda_lock_nm": 851.4,
    "cavity.waist_um": 45.3,
    "cavity.length_mm": 1.16,
    "cavity.finesse": 5.8e4,
    "cavity.beat_cycle_um": 386.8,
    "tweezer.n_traps": 40,
    "tweezer.spacing_um": 4.26,
    "tweezer.trap_depth_mK": 0.9,
    "tweezer.waist_um": 1.6,
    "tweezer.power_mW": 10.0,
    "loading.p": 0.6,
    "loading.false_positive": 0.0,
    "loading.false_negative": 0.0,
    # null: calibrate from rearrange.calibrate_N / rearrange.calibrate_target
    "rearrange.survival": None,
    "rearrange.calibrate_N": 20,
    "rearrange.calibrate_target": 0.38,
    "rearrange.sweep_us": 800.0,
    "rearrange.sample_rate_MSps": 1.0,
    "rearrange.aod_MHz_per_um": 1.0 / 4.26,
    "rearrange.aod_center_MHz": 100.0,
    "spectrum.g_MHz": 2.62,
    "spectrum.delta_ca_MHz": 0.2,
    "spectrum.span_MHz": 25.0,
    "spectrum.points": 201,
    "noise.sigma": 0.02,
    "noise.position_jitter_um": 0.0,
}

PRESETS = {"paper-2024": PAPER_2024}

_INT_KEYS = {"tweezer.n_traps", "rearrange.calibrate_N", "spectrum.points"}
_NULLABLE = {"rearrange.survival"}


@dataclass(frozen=True)
class Config:
    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def cavity(self) -> CavityParams:
        v = self.values
        return CavityParams(
            g0_max=v["cavity.g0_max_MHz"], kappa=v["cavity.kappa_MHz"], gamma=v["cavity.gamma_MHz"],
            lambda_probe=v["cavity.lambda_probe_nm"], lambda_lock=v["cavity.lambda_lock_nm"],
            waist=v["cavity.waist_um"], cavity_length=v["cavity.length_mm"],
            finesse=v["cavity.finesse"], beat_cycle=v["cavity.beat_cycle_um"],
        )

    @property
    def tweezer(self) -> TweezerParams:
        v = self.values
        return TweezerParams(
            n_traps=v["tweezer.n_traps"], spacing=v["tweezer.spacing_um"],
            trap_depth=v["tweezer.trap_depth_mK"], tweezer_waist=v["tweezer.waist_um"],
            power_per_trap=v["tweezer.power_mW"],
        )

    @property
    def loading(self) -> LoadingConfig:
        v = self.values
        return LoadingConfig(n_traps=v["tweezer.n_traps"], p=v["loading.p"],
                             false_positive=v["loading.false_positive"],
                             false_negative=v["loading.false_negative"])

    @property
    def survival(self) -> float:
        v = self.values
        if v["rearrange.survival"] is not None:
            return float(v["rearrange.survival"])
        return calibrate_survival(v["rearrange.calibrate_N"], v["rearrange.calibrate_target"],
                                  v["tweezer.n_traps"], v["loading.p"])

    def to_json(self) -> str:
        return json.dumps(self.values, indent=2, sort_keys=True)


def make_config(overrides: dict | None = None, preset: str = "paper-2024") -> Config:
    """Merge ``overrides`` onto a preset and validate every field."""
    if preset not in PRESETS:
        raise ConfigError("preset", f"unknown preset {preset!r}; known: {sorted(PRESETS)}")
    values = dict(PRESETS[preset])
    for key, val in (overrides or {}).items():
        if key not in values:
            raise ConfigError(key, "unknown config key")
        values[key] = val
    for key, val in values.items():
        if val is None:
            if key not in _NULLABLE:
                raise ConfigError(key, "value may not be null")
            continue
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(key, f"expected a number, got {val!r}")
        if key in _INT_KEYS:
            if int(val) != val:
                raise ConfigError(key, f"expected an integer, got {val!r}")
            values[key] = int(val)
        else:
            values[key] = float(val)
    cfg = Config(values)
    # build every typed view so domain errors surface with the section name
    for section in ("cavity", "tweezer", "loading"):
        try:
            getattr(cfg, section)
        except (DomainError, ValueError) as exc:
            raise ConfigError(section, str(exc)) from exc
    for key in ("rearrange.survival", "rearrange.calibrate_target", "noise.sigma",
                "noise.position_jitter_um"):
        val = values[key]
        if val is not None and val < 0:
            raise ConfigError(key, "must be >= 0")
    if values["rearrange.survival"] is not None and values["rearrange.survival"] > 1:
        raise ConfigError("rearrange.survival", "must be <= 1")
    for key in ("rearrange.sweep_us", "rearrange.sample_rate_MSps", "spectrum.span_MHz"):
        if not values[key] > 0:
            raise ConfigError(key, "must be > 0")
    if values["spectrum.points"] < 5:
        raise ConfigError("spectrum.points", "must be >= 5")
    return cfg


def load_config(path: str | Path | None = None, preset: str = "paper-2024") -> Config:
    if path is None:
        return make_config(None, preset)
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be an object of dotted keys")
    return make_config(data, preset)
