"""Run configuration: TOML on disk, validated by pydantic models.

Every key carries its unit (``_ns``, ``_MHz``, ``_Hz``, ``_per_s``). Missing
keys take the default experiment values; unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path
from typing import Literal, Optional

import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigParseError, ConfigValidationError


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PulseConfig(_Section):
    duration_ns: float = Field(49.0, gt=0)
    rise_ns: float = Field(5.0, ge=0)
    extinction: float = Field(0.015, ge=0, lt=1)


class FilterConfig(_Section):
    name: str = ""
    kappa_over_2pi_MHz: float = Field(gt=0)


class TimingConfig(_Section):
    rep_rate_Hz: float = Field(50e3, gt=0)
    window_ns: float = Field(500.0, gt=0)
    dt_ns: float = Field(1.0, gt=0)
    duty_measure_s: float = Field(0.2, ge=0)
    duty_lock_s: float = Field(0.8, ge=0)


class ApdConfig(_Section):
    dark_rate_per_s: float = Field(0.4, ge=0)
    cw_rate_per_s: float = Field(275.0, gt=0)
    leakage: Literal["intensity", "field"] = "intensity"


class GateConfig(_Section):
    center_ns: Optional[float] = None  # None: peak of the click model
    length_ns: float = Field(40.0, gt=0)


class ClicksConfig(_Section):
    n_pulses: int = Field(1_000_000_000, gt=0)
    bin_ns: float = Field(2.0, gt=0)
    compare_pulse_ns: list[float] = [7.0, 20.0, 49.0]
    background_from_ns: Optional[float] = None  # None: last 20% of the window

    @field_validator("compare_pulse_ns")
    @classmethod
    def _positive(cls, v):
        if any(x <= 0 for x in v):
            raise ValueError("pulse lengths must be > 0")
        return v


class HomodyneConfig(_Section):
    populations: list[float] = [0.392, 0.595, 0.010]
    n_windows: int = Field(13_000, gt=1)
    n_vacuum_windows: int = Field(13_000, gt=1)
    background_heralds: bool = False
    electronic_noise: float = Field(0.0, ge=0)
    path_delay_ns: float = Field(0.0, ge=0)

    @field_validator("populations")
    @classmethod
    def _simplex(cls, v):
        if not v or len(v) > 7:
            raise ValueError("populations needs 1 to 7 entries (n = 0..6)")
        if any(p < 0 for p in v) or sum(v) <= 0:
            raise ValueError("populations must be non-negative with a positive sum")
        return v


class AnalysisConfig(_Section):
    lowpass_MHz: float = Field(25.0, gt=0)
    fock_cutoff: int = Field(6, ge=1, le=6)
    em_tol: float = Field(1e-9, gt=0)
    em_max_iter: int = Field(100_000, gt=0)
    mode_source: Literal["estimated", "optimal"] = "estimated"
    mode_method: Literal["model", "direct"] = "model"


def _default_filters() -> list[FilterConfig]:
    # OPO: gamma/2pi = 4.4 MHz full bandwidth -> kappa/2pi = 2.2 MHz; FC: 12 MHz
    return [FilterConfig(name="opo", kappa_over_2pi_MHz=2.2),
            FilterConfig(name="fc", kappa_over_2pi_MHz=12.0)]


class RunConfig(_Section):
    seed: int = 0
    pulse: PulseConfig = PulseConfig()
    filters: list[FilterConfig] = Field(default_factory=_default_filters)
    timing: TimingConfig = TimingConfig()
    apd: ApdConfig = ApdConfig()
    gate: GateConfig = GateConfig()
    clicks: ClicksConfig = ClicksConfig()
    homodyne: HomodyneConfig = HomodyneConfig()
    analysis: AnalysisConfig = AnalysisConfig()

    @model_validator(mode="after")
    def _one_opo(self):
        names = [f.name for f in self.filters]
        if not self.filters:
            raise ValueError("filters: at least one filter is required")
        if names.count("opo") != 1:
            raise ValueError("filters: exactly one filter must be named 'opo'")
        if self.apd.cw_rate_per_s < self.apd.dark_rate_per_s:
            raise ValueError("apd: cw_rate_per_s must not be below dark_rate_per_s")
        if self.timing.window_ns % self.clicks.bin_ns > 1e-9:
            raise ValueError("clicks.bin_ns must divide timing.window_ns")
        return self

    @property
    def opo(self) -> FilterConfig:
        return next(f for f in self.filters if f.name == "opo")

    def to_dict(self) -> dict:
        return self.model_dump(mode="json")

    def digest(self) -> bytes:
        """SHA-256 over the canonical JSON form."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).digest()

    def updated(self, overrides: dict) -> "RunConfig":
        """New config with dotted-key overrides applied, e.g. ``{"pulse.duration_ns": 20}``."""
        data = self.to_dict()
        for key, value in overrides.items():
            node = data
            *parents, leaf = key.split(".")
            for p in parents:
                if not isinstance(node, dict) or p not in node:
                    raise ConfigValidationError(f"unknown config key {key!r}")
                node = node[p]
            if not isinstance(node, dict) or leaf not in node:
                raise ConfigValidationError(f"unknown config key {key!r}")
            node[leaf] = value
        return config_from_dict(data)


def _describe(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def config_from_dict(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigValidationError(_describe(err)) from None


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigParseError(f"{source}: {err}") from None
    return config_from_dict(data)


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))


def dump_config(config: RunConfig) -> str:
    data = config.to_dict()
    if data["gate"]["center_ns"] is None:
        del data["gate"]["center_ns"]
    if data["clicks"]["background_from_ns"] is None:
        del data["clicks"]["background_from_ns"]
    return tomli_w.dumps(data)


def save_config(config: RunConfig, path) -> None:
    Path(path).write_text(dump_config(config))
