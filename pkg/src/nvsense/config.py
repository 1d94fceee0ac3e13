"""Run configuration: a sectioned INI document with strict key validation.

Defaults carry the published operating point (f0 = 0.063, f1 = 0.048 photons
per readout, 1750 G bias field).  Unknown sections or keys are rejected so a
typo never silently falls back to a default.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from . import fieldcal
from .constants import GAUSS_TO_TESLA


class ConfigError(ValueError):
    """Invalid or malformed run configuration."""


_SCHEMA = {
    "run": {"master_seed"},
    "readout": {"f0", "f1", "t_read_us"},
    "field": {"b0_gauss"},
    "bath": {
        "variant",
        "variance_rad2_s2",
        "tau_c_us",
        "amplitude_rad2_s",
        "exponent",
        "rho_h_per_m3",
        "depth_nm",
        "tau_h_us",
    },
    "sense": {"snr_target", "n_logic", "t2_us", "n", "a_hz"},
    "smassay": {"pixel_pitch_um", "psf_sigma_px"},
}

_BATH_KEYS = {
    "lorentzian": {"variance_rad2_s2", "tau_c_us"},
    "power_law": {"amplitude_rad2_s", "exponent"},
    "proton_peak": {"rho_h_per_m3", "depth_nm", "tau_h_us"},
}


@dataclass
class RunConfig:
    master_seed: int = 1
    f0: float = 0.063
    f1: float = 0.048
    t_read_us: float = 2.0
    b0_gauss: float = 1750.0
    bath_variant: str = "lorentzian"
    bath_params: dict = field(default_factory=dict)
    snr_target: float = fieldcal.SNR_TARGET_DEFAULT
    n_logic: int = 1
    t2_us: float = 31.0
    n: float = fieldcal.STRETCH_DEFAULT
    a_hz: float = 160.0
    pixel_pitch_um: float = 0.22
    psf_sigma_px: float = 1.5

    @property
    def b0_tesla(self) -> float:
        return self.b0_gauss * GAUSS_TO_TESLA

    def readout(self):
        from .simkit import ReadoutModel

        return ReadoutModel(self.f0, self.f1, self.t_read_us * 1e-6)

    def bath(self):
        from . import noisebath

        p = self.bath_params
        if self.bath_variant == "lorentzian":
            return noisebath.Lorentzian(p["variance_rad2_s2"], p["tau_c_us"] * 1e-6)
        if self.bath_variant == "power_law":
            return noisebath.PowerLaw(p["amplitude_rad2_s"], p["exponent"])
        if self.bath_variant == "proton_peak":
            return noisebath.proton_bath_spectrum(
                p["rho_h_per_m3"], p["depth_nm"] * 1e-9, self.b0_tesla, p["tau_h_us"] * 1e-6
            )
        raise ConfigError(f"unknown bath variant {self.bath_variant!r}")

    def sensing_budget(self) -> fieldcal.SensingBudget:
        import numpy as np

        return fieldcal.SensingBudget(
            f0=self.f0,
            f1=self.f1,
            t_read=self.t_read_us * 1e-6,
            T2=self.t2_us * 1e-6,
            n=self.n,
            A=2 * np.pi * self.a_hz,
            snr_target=self.snr_target,
            n_logic=self.n_logic,
        )


_DEFAULT_BATH = {"variance_rad2_s2": (2 * 3.141592653589793 * 50e3) ** 2, "tau_c_us": 2.0}


def load_config(path=None) -> RunConfig:
    """Parse an INI config file; None returns the shipped defaults."""
    cfg = RunConfig(bath_params=dict(_DEFAULT_BATH))
    if path is None:
        return cfg

    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")

    for section in parser.sections():
        key = section.lower()
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for name in parser[section]:
            if name.lower() not in _SCHEMA[key]:
                raise ConfigError(f"unknown key {name!r} in section [{section}]")

    def get(section, key, cast, default):
        try:
            raw = parser.get(section, key)
        except (configparser.NoSectionError, configparser.NoOptionError):
            return default
        try:
            return cast(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from exc

    cfg.master_seed = get("run", "master_seed", int, cfg.master_seed)
    cfg.f0 = get("readout", "f0", float, cfg.f0)
    cfg.f1 = get("readout", "f1", float, cfg.f1)
    cfg.t_read_us = get("readout", "t_read_us", float, cfg.t_read_us)
    cfg.b0_gauss = get("field", "b0_gauss", float, cfg.b0_gauss)
    cfg.snr_target = get("sense", "snr_target", float, cfg.snr_target)
    cfg.n_logic = get("sense", "n_logic", int, cfg.n_logic)
    cfg.t2_us = get("sense", "t2_us", float, cfg.t2_us)
    cfg.n = get("sense", "n", float, cfg.n)
    cfg.a_hz = get("sense", "a_hz", float, cfg.a_hz)
    cfg.pixel_pitch_um = get("smassay", "pixel_pitch_um", float, cfg.pixel_pitch_um)
    cfg.psf_sigma_px = get("smassay", "psf_sigma_px", float, cfg.psf_sigma_px)

    if parser.has_section("bath"):
        variant = get("bath", "variant", str, cfg.bath_variant).lower()
        if variant not in _BATH_KEYS:
            raise ConfigError(f"unknown bath variant {variant!r}")
        cfg.bath_variant = variant
        cfg.bath_params = {}
        for name in _BATH_KEYS[variant]:
            if not parser.has_option("bath", name):
                raise ConfigError(f"bath variant {variant!r} requires key {name!r}")
            cfg.bath_params[name] = get("bath", name, float, None)
        extra = set(n.lower() for n in parser["bath"]) - _BATH_KEYS[variant] - {"variant"}
        if extra:
            raise ConfigError(f"keys {sorted(extra)} do not belong to bath variant {variant!r}")

    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if not cfg.f0 > cfg.f1 > 0:
        raise ConfigError("readout needs f0 > f1 > 0")
    for name in ("t_read_us", "b0_gauss", "snr_target", "t2_us", "n",
                 "pixel_pitch_um", "psf_sigma_px"):
        if getattr(cfg, name) <= 0:
            raise ConfigError(f"{name} must be positive")
    if cfg.n_logic < 1:
        raise ConfigError("n_logic must be >= 1")
    for key, val in cfg.bath_params.items():
        if key != "exponent" and val <= 0:
            raise ConfigError(f"bath parameter {key} must be positive")
