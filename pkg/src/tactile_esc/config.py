"""YAML run configuration: ESC gains in mm/deg/Hz, trial timing, lock overrides.

Example::

    esc:
      b_mm: [0.2, 0.2, 0.5]
      b_deg: [0.675, 0.675, 0.675]
      w_hz: [0.9, 0.83, 0.7, 1.05, 1.0, 0.95]
      k: [0.7, 1.1, 0.7, 10, 10, 10]
      hpf_hz: 0.7
      lpf_hz: 1.59
    trial:
      feedback_rate: 13
      time_limit: 1800
    locks:
      DiscDetainer:
        depth_mm: 19
        noise_sigma_mm: 0.02
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .esc import (DEFAULT_B_DEG, DEFAULT_B_MM, DEFAULT_HPF_HZ, DEFAULT_K, DEFAULT_LPF_HZ,
                  DEFAULT_W_HZ, EscConfig)
from .lock_sim import ARCHETYPES, DEG, MM, LockModel, preset


class ConfigError(ValueError):
    pass


_ESC_KEYS = {"b_mm", "b_deg", "w_hz", "k", "hpf_hz", "lpf_hz"}
_TRIAL_KEYS = {"feedback_rate", "time_limit"}
# override key -> (LockModel field, scale to SI); tuples are scaled elementwise
_LOCK_KEYS = {
    "depth_mm": ("depth_d", MM),
    "keyhole_center_mm": ("keyhole_center", MM),
    "keyhole_halfwidths_mm": ("keyhole_halfwidths", MM),
    "chamfer_width_mm": ("chamfer_width", MM),
    "chamfer_depth_mm": ("chamfer_depth", MM),
    "plateau_height_mm": ("plateau_height", MM),
    "plateau_extent_mm": ("plateau_extent", MM),
    "orientation_tolerance_deg": ("orientation_tolerance", DEG),
    "jam_clearance_mm": ("jam_clearance", MM),
    "wedge_enabled": ("wedge_enabled", None),
    "wedge_edge_mm": ("wedge_edge", MM),
    "wedge_trigger_px": ("wedge_trigger_px", 1.0),
    "wedge_release_px": ("wedge_release_px", 1.0),
    "kappa_px_per_mm": ("kappa", 1.0),
    "noise_sigma_mm": ("noise_sigma", MM),
}


@dataclass
class RunConfig:
    esc: EscConfig = field(default_factory=EscConfig.default)
    feedback_rate: float = 13.0
    time_limit: float = 1800.0
    lock_overrides: dict = field(default_factory=dict)

    @property
    def dt(self) -> float:
        return 1.0 / self.feedback_rate

    def lock(self, archetype: str) -> LockModel:
        base = preset(archetype)
        return replace(base, **self.lock_overrides.get(archetype, {}))


def _check_keys(section: dict, allowed: set, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(section).__name__}")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def _scale(value, factor, key):
    if factor is None:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false")
        return value
    try:
        if isinstance(value, (list, tuple)):
            return tuple(float(v) * factor for v in value)
        return float(value) * factor
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def parse_config(data: dict | None) -> RunConfig:
    data = data or {}
    _check_keys(data, {"esc", "trial", "locks"}, "config")
    esc_section = data.get("esc", {}) or {}
    _check_keys(esc_section, _ESC_KEYS, "esc")
    try:
        esc = EscConfig.from_user_units(
            b_mm=esc_section.get("b_mm", DEFAULT_B_MM),
            b_deg=esc_section.get("b_deg", DEFAULT_B_DEG),
            w_hz=esc_section.get("w_hz", DEFAULT_W_HZ),
            k=esc_section.get("k", DEFAULT_K),
            hpf_cutoff=esc_section.get("hpf_hz", DEFAULT_HPF_HZ),
            lpf_cutoff=esc_section.get("lpf_hz", DEFAULT_LPF_HZ),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"esc: {exc}") from exc

    trial = data.get("trial", {}) or {}
    _check_keys(trial, _TRIAL_KEYS, "trial")
    rate = float(trial.get("feedback_rate", 13.0))
    if not 10.0 <= rate <= 16.0:
        raise ConfigError(f"trial.feedback_rate must lie in [10, 16] Hz, got {rate}")
    limit = float(trial.get("time_limit", 1800.0))
    if not limit > 0:
        raise ConfigError("trial.time_limit must be > 0")

    overrides = {}
    locks = data.get("locks", {}) or {}
    _check_keys(locks, set(ARCHETYPES), "locks")
    for name, section in locks.items():
        _check_keys(section or {}, set(_LOCK_KEYS), f"locks.{name}")
        fields = {}
        base = preset(name)
        for key, value in (section or {}).items():
            attr, factor = _LOCK_KEYS[key]
            where = f"locks.{name}.{key}"
            default = getattr(base, attr)
            if isinstance(default, tuple) and (not isinstance(value, (list, tuple))
                                               or len(value) != len(default)):
                raise ConfigError(f"{where}: expected a list of {len(default)} values")
            fields[attr] = _scale(value, factor, where)
        try:
            replace(base, **fields)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"locks.{name}: {exc}") from exc
        overrides[name] = fields
    return RunConfig(esc=esc, feedback_rate=rate, time_limit=limit, lock_overrides=overrides)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return parse_config(data)
