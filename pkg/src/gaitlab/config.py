"""Pipeline configuration: body parameters, per-muscle-group motor-unit
pools and insertion geometry, signal thresholds, and the run seed.

Loadable from JSON or TOML; unknown keys are rejected so typos cannot
silently fall back to defaults.  The library-level motor-unit defaults
(50 units, 0.1-2 N twitch scales) suit unit-scale studies; the pipeline
table below scales each group's twitch range so the pools can carry the
force demands of a body-scale gait simulation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .biomech import MUSCLES, BodyParams
from .muscle import MuscleAgentModel

try:
    import tomllib as _toml
except ImportError:  # Python < 3.11
    import tomli as _toml


class ConfigError(ValueError):
    """Configuration file failed validation."""


# Per-group twitch-scale ranges sized so pool capacity covers roughly twice
# the peak demand of the reference synthetic gait at 80 kg.  The hip groups
# carry the large antagonist-coupling torques through a sin(5 deg) lever,
# hence their scale.
DEFAULT_MUSCLE_TABLE = {
    "gastrocnemius": {"n_units": 50, "f0_min": 2.0, "f0_max": 40.0},
    "tibialis_anterior": {"n_units": 50, "f0_min": 1.6, "f0_max": 32.0},
    "quadriceps": {"n_units": 50, "f0_min": 21.0, "f0_max": 420.0},
    "hamstrings": {"n_units": 50, "f0_min": 20.0, "f0_max": 400.0},
    "gluteus_maximus": {"n_units": 50, "f0_min": 15.0, "f0_max": 300.0},
    "iliopsoas": {"n_units": 50, "f0_min": 140.0, "f0_max": 2800.0},
}

_MUSCLE_KEYS = {"n_units", "f0_min", "f0_max", "t_peak", "max_force_factor",
                "f_p0", "insertion_distance", "insertion_angle_deg"}

_BODY_KEYS = {"body_mass", "foot_length", "leg_length", "thigh_length",
              "heel_to_ankle", "ankle_to_foot_centre", "knee_to_leg_centre",
              "hip_to_full_leg_centre", "mass_fraction", "gyration_coeff"}

_TOP_KEYS = {"body", "muscles", "seed", "sagittal_axis", "cycle_duration_s",
             "centre_amplitude", "contact_band_fraction", "verdict_threshold",
             "histogram_bins"}


@dataclass
class MuscleParams:
    n_units: int = 50
    f0_min: float = 0.1
    f0_max: float = 2.0
    t_peak: float = 40.0
    max_force_factor: float = 10.0
    f_p0: float = 1.0
    insertion_distance: float = 0.05
    insertion_angle_deg: float = 15.0

    def build(self, name):
        return MuscleAgentModel.default(
            name, n_units=self.n_units, f0_range=(self.f0_min, self.f0_max),
            t_peak=self.t_peak, max_force_factor=self.max_force_factor,
            f_p0=self.f_p0)


@dataclass
class PipelineConfig:
    body: BodyParams = field(default_factory=BodyParams)
    muscles: dict = field(default_factory=dict)
    seed: int = 0
    sagittal_axis: str | None = None
    cycle_duration_s: float = 1.2
    centre_amplitude: float | None = None
    contact_band_fraction: float = 0.02
    verdict_threshold: float = 0.5
    histogram_bins: int = 20

    def __post_init__(self):
        from .biomech import DEFAULT_INSERTIONS
        full = {}
        for muscle in MUSCLES:
            params = dict(DEFAULT_MUSCLE_TABLE.get(muscle, {}))
            dist, angle = DEFAULT_INSERTIONS[muscle]
            params.setdefault("insertion_distance", dist)
            params.setdefault("insertion_angle_deg", float(np.degrees(angle)))
            overrides = self.muscles.get(muscle, {})
            unknown = set(overrides) - _MUSCLE_KEYS
            if unknown:
                raise ConfigError(
                    f"unknown keys for muscle {muscle!r}: {sorted(unknown)}")
            params.update(overrides)
            full[muscle] = MuscleParams(**params)
        unknown_muscles = set(self.muscles) - set(MUSCLES)
        if unknown_muscles:
            raise ConfigError(f"unknown muscle groups: {sorted(unknown_muscles)}")
        self.muscles = full
        if not 0 < self.verdict_threshold < 1:
            raise ConfigError("verdict_threshold must lie in (0, 1)")
        if self.histogram_bins < 1:
            raise ConfigError("histogram_bins must be >= 1")
        if not self.cycle_duration_s > 0:
            raise ConfigError("cycle_duration_s must be > 0")

    def insertions(self):
        """Insertion table in the biomech (distance, angle-rad) layout."""
        return {name: (p.insertion_distance, np.radians(p.insertion_angle_deg))
                for name, p in self.muscles.items()}

    def build_muscles(self):
        return {name: p.build(name) for name, p in self.muscles.items()}

    def to_dict(self):
        return {
            "body": {k: getattr(self.body, k) for k in sorted(_BODY_KEYS)},
            "muscles": {name: {k: getattr(p, k) for k in sorted(_MUSCLE_KEYS)}
                        for name, p in sorted(self.muscles.items())},
            "seed": self.seed,
            "sagittal_axis": self.sagittal_axis,
            "cycle_duration_s": self.cycle_duration_s,
            "centre_amplitude": self.centre_amplitude,
            "contact_band_fraction": self.contact_band_fraction,
            "verdict_threshold": self.verdict_threshold,
            "histogram_bins": self.histogram_bins,
        }


def _from_dict(doc):
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    body_doc = doc.get("body", {})
    unknown_body = set(body_doc) - _BODY_KEYS
    if unknown_body:
        raise ConfigError(f"unknown body keys: {sorted(unknown_body)}")
    try:
        body = BodyParams(**body_doc)
    except ValueError as exc:
        raise ConfigError(f"invalid body parameters: {exc}") from exc
    kwargs = {k: v for k, v in doc.items() if k not in ("body",)}
    try:
        return PipelineConfig(body=body, **kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None):
    """Load a PipelineConfig from a JSON or TOML file (or defaults)."""
    if path is None:
        return PipelineConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix == ".toml":
        with open(path, "rb") as fh:
            doc = _toml.load(fh)
    else:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    return _from_dict(doc)
