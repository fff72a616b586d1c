"""Strict scenario configuration.

Unknown keys are rejected at every level.  Fields left out fall back to
scenario-dependent defaults, and the resolved config is what gets echoed into
reports, so ``parse -> dump -> parse`` is the identity.
"""
from __future__ import annotations

import json
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .grid import is_power_of_two
from .madelung import DEFAULT_RHO_FLOOR
from .wigner import MAX_SERIES_ORDER

ScenarioName = Literal[
    "free_packet", "harmonic_ground", "harmonic_coherent", "quartic_packet", "double_well",
    "two_particle_product", "two_particle_entangled",
    "brownian_harmonic", "brownian_doublewell", "meanfield_contrast",
]
SCENARIOS: tuple = ScenarioName.__args__

TWO_PARTICLE = {"two_particle_product", "two_particle_entangled"}
BROWNIAN = {"brownian_harmonic", "brownian_doublewell", "meanfield_contrast"}

# per-scenario overrides of the section defaults below
SCENARIO_DEFAULTS = {
    "free_packet": {"time": {"t_final": 1.0}},
    "harmonic_ground": {"time": {"t_final": 1.0}},
    # finer steps keep the O(dt^2) split-step energy error of these states below 1e-7
    "harmonic_coherent": {"time": {"dt": 5e-4, "t_final": 1.0}, "wigner": {"k_max": 0}},
    "quartic_packet": {"time": {"dt": 2.5e-4, "t_final": 0.5}, "wigner": {"k_max": 1}},
    "double_well": {"time": {"dt": 1.25e-4, "t_final": 0.5}, "wigner": {"k_max": 1}},
    "two_particle_product": {"grid": {"n": 256, "L": 32.0, "origin": -16.0},
                             "time": {"t_final": 0.1}},
    "two_particle_entangled": {"grid": {"n": 256, "L": 32.0, "origin": -16.0},
                               "time": {"t_final": 0.1}},
    "brownian_harmonic": {"time": {"t_final": 50.0}},
    "brownian_doublewell": {"time": {"t_final": 100.0}, "brownian": {"kT": 0.5}},
    "meanfield_contrast": {"time": {"t_final": 30.0}},
}


class ConfigError(ValueError):
    """Invalid configuration document; the message names key and constraint."""


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class GridConfig(_Section):
    n: int | None = None
    L: float | None = Field(default=None, gt=0)
    origin: float | None = None

    @field_validator("n")
    @classmethod
    def _power_of_two(cls, n):
        if n is not None and not is_power_of_two(n):
            raise ValueError(f"n={n} must be a power of two")
        return n


class ConstantsConfig(_Section):
    hbar: float = Field(default=1.0, gt=0)
    mass: float = Field(default=1.0, gt=0)


class TimeConfig(_Section):
    dt: float | None = Field(default=None, gt=0)
    t_final: float | None = Field(default=None, gt=0)
    frame_stride: int = Field(default=10, ge=1)


class BohmConfig(_Section):
    n_paths: int = Field(default=10_000, ge=1)
    seed: int = 0
    dt: float | None = Field(default=None, gt=0)


class WignerConfig(_Section):
    k_max: int | None = Field(default=None, ge=0, le=MAX_SERIES_ORDER)


class BrownianConfig(_Section):
    mass: float = Field(default=1.0, gt=0)
    friction: float = Field(default=1.0, gt=0)
    kT: float | None = Field(default=None, ge=0)
    dt: float = Field(default=0.01, gt=0)
    n_paths: int = Field(default=10_000, ge=1)
    seed: int = 0
    bandwidth_scale: float = Field(default=1.0, gt=0)


class MadelungConfig(_Section):
    rho_floor: float = Field(default=DEFAULT_RHO_FLOOR, gt=0, lt=1)


class OutputConfig(_Section):
    directory: str = "output"
    formats: list[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv", "json"])
    max_paths: int = Field(default=200, ge=1)
    wigner_stride: int = Field(default=4, ge=1)


class ScenarioConfig(_Section):
    scenario: ScenarioName
    grid: GridConfig = Field(default_factory=GridConfig)
    constants: ConstantsConfig = Field(default_factory=ConstantsConfig)
    time: TimeConfig = Field(default_factory=TimeConfig)
    bohm: BohmConfig = Field(default_factory=BohmConfig)
    wigner: WignerConfig = Field(default_factory=WignerConfig)
    brownian: BrownianConfig = Field(default_factory=BrownianConfig)
    madelung: MadelungConfig = Field(default_factory=MadelungConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def _resolve(self):
        base = {"grid": {"n": 512, "L": 40.0, "origin": -20.0}, "time": {"dt": 1e-3},
                "wigner": {"k_max": MAX_SERIES_ORDER}, "brownian": {"kT": 1.0}}
        for section, values in SCENARIO_DEFAULTS[self.scenario].items():
            base.setdefault(section, {}).update(values)
        for section, values in base.items():
            sub = getattr(self, section)
            for key, value in values.items():
                if getattr(sub, key) is None:
                    setattr(sub, key, value)
        if self.bohm.dt is None:
            self.bohm.dt = self.time.dt
        ratio = self.time.dt * self.time.frame_stride / self.bohm.dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
            raise ValueError("bohm.dt must divide the frame spacing time.dt * time.frame_stride")
        return self


def _format_error(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        where = ".".join(str(p) for p in e["loc"]) or "config"
        lines.append(f"{where}: {e['msg']}")
    return "; ".join(lines)


def config_from_dict(data) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("config document must be a mapping")
    if "scenario" not in data:
        raise ConfigError(f"scenario: required field missing (one of {', '.join(SCENARIOS)})")
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_error(err)) from None


def parse_config(text: str) -> ScenarioConfig:
    """Parse a YAML or JSON document (JSON is a YAML subset)."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"malformed document: {err}") from None
    return config_from_dict(data)


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def config_to_dict(config: ScenarioConfig) -> dict:
    return config.model_dump(mode="json")


def dump_config(config: ScenarioConfig) -> str:
    return json.dumps(config_to_dict(config), indent=2)
