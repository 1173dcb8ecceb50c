"""JSON run configuration shared by the command-line tools.

Every field has a default, so ``{}`` is a valid document describing the
reference setup: J = J_n = 0.1 kg m^2, Ts = 1 ms, K_p = 500, K_v = 25, g_D = 50.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .loops import FeedbackGains
from .observer import ObserverConfig
from .plant import ContinuousPlant, DiscretePlant, NominalPlant, zoh_discretize
from .sim import DisturbanceProfile, PIDConfig, ReferenceProfile

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    pass


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)


class PlantSection(_Model):
    J: float = 0.1
    b: float = 0.0

    @field_validator("J")
    @classmethod
    def _inertia(cls, v):
        if not math.isfinite(v) or v <= 0:
            raise ValueError("inertia must be positive")
        return v

    @field_validator("b")
    @classmethod
    def _friction(cls, v):
        if not math.isfinite(v) or v < 0:
            raise ValueError("friction must be nonnegative")
        return v


class NominalSection(_Model):
    J_n: float = 0.1
    b_n: float = 0.0

    @field_validator("J_n")
    @classmethod
    def _inertia(cls, v):
        if not math.isfinite(v) or v <= 0:
            raise ValueError("nominal inertia must be positive")
        return v

    @field_validator("b_n")
    @classmethod
    def _friction(cls, v):
        if not math.isfinite(v) or v < 0:
            raise ValueError("nominal friction must be nonnegative")
        return v


class ObserverSection(_Model):
    g_D: float = 50.0

    @field_validator("g_D")
    @classmethod
    def _gain(cls, v):
        if not math.isfinite(v) or v <= 0:
            raise ValueError("observer gain must be positive")
        return v


class GainsSection(_Model):
    K_p: float = 500.0
    K_v: float = Field(25.0, validation_alias="K_d")

    @model_validator(mode="before")
    @classmethod
    def _alias(cls, data):
        if isinstance(data, dict) and "K_v" in data and "K_d" in data:
            raise ValueError("K_v and K_d are aliases; give one of them")
        return data

    @field_validator("K_p", "K_v")
    @classmethod
    def _nonneg(cls, v):
        if not math.isfinite(v) or v < 0:
            raise ValueError("feedback gains must be nonnegative")
        return v


class PIDSection(_Model):
    K_p: float = 500.0
    K_i: float = 5000.0
    K_d: float = 25.0

    @field_validator("K_p", "K_i", "K_d")
    @classmethod
    def _nonneg(cls, v):
        if not math.isfinite(v) or v < 0:
            raise ValueError("PID gains must be nonnegative")
        return v


class _Constant(_Model):
    kind: Literal["constant"]
    amplitude: float = 0.0


class _Step(_Model):
    kind: Literal["step"]
    amplitude: float
    time: float = 0.0


class _Sine(_Model):
    kind: Literal["sine"]
    amplitude: float
    frequency: float
    phase: float = 0.0


class _Ramp(_Model):
    kind: Literal["ramp"]
    slope: float
    amplitude: float = 0.0
    time: float = 0.0


class _Composite(_Model):
    kind: Literal["composite"]
    parts: list["DisturbanceSchema"]


DisturbanceSchema = Annotated[
    Union[_Constant, _Step, _Sine, _Ramp, _Composite], Field(discriminator="kind")
]
_Composite.model_rebuild()


def _to_disturbance(node) -> DisturbanceProfile:
    data = node.model_dump()
    if node.kind == "composite":
        return DisturbanceProfile("composite", parts=tuple(_to_disturbance(p) for p in node.parts))
    return DisturbanceProfile(**data)


class _RefStep(_Model):
    kind: Literal["step"]
    amplitude: float = 1.0
    time: float = 0.0


class _RefSine(_Model):
    kind: Literal["sinusoid"]
    amplitude: float = 0.5
    frequency: float = 0.5
    time: float = 0.0


class _RefTrapezoid(_Model):
    kind: Literal["trapezoid"]
    amplitude: float = 1.0
    time: float = 0.0
    rise: float = 1.0
    hold: float = 1.0


ReferenceSchema = Annotated[Union[_RefStep, _RefSine, _RefTrapezoid], Field(discriminator="kind")]


def _default_disturbance():
    return _Composite(
        kind="composite",
        parts=[_Step(kind="step", amplitude=5.0, time=2.0), _Sine(kind="sine", amplitude=1.0, frequency=2.0)],
    )


class ScenarioSection(_Model):
    disturbance: DisturbanceSchema = Field(default_factory=_default_disturbance)
    reference: ReferenceSchema = Field(default_factory=lambda: _RefStep(kind="step", amplitude=1.0))
    horizon: float = 10.0
    run_pid: bool = True

    @field_validator("horizon")
    @classmethod
    def _horizon(cls, v):
        if not math.isfinite(v) or v <= 0:
            raise ValueError("horizon must be positive")
        return v


class OutputSection(_Model):
    format: Literal["csv", "json"] = "csv"
    path: Optional[str] = None


class RunConfig(_Model):
    plant: PlantSection = Field(default_factory=PlantSection)
    nominal: NominalSection = Field(default_factory=NominalSection)
    T_s: float = 1e-3
    observer: ObserverSection = Field(default_factory=ObserverSection)
    gains: GainsSection = Field(default_factory=GainsSection)
    pid: PIDSection = Field(default_factory=PIDSection)
    scenario: ScenarioSection = Field(default_factory=ScenarioSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @field_validator("T_s")
    @classmethod
    def _ts(cls, v):
        if not math.isfinite(v) or v <= 0:
            raise ValueError("sampling period must be positive")
        return v

    @model_validator(mode="after")
    def _physical(self):
        # re-check profile constraints against the sampling period
        self.disturbance_profile().validate(self.T_s)
        self.reference_profile().validate(self.T_s)
        return self

    def continuous_plant(self) -> ContinuousPlant:
        return ContinuousPlant(self.plant.J, self.plant.b)

    def nominal_plant(self) -> NominalPlant:
        return NominalPlant(self.nominal.J_n, self.nominal.b_n)

    def discrete(self) -> tuple[DiscretePlant, DiscretePlant]:
        return zoh_discretize(self.continuous_plant(), self.T_s), zoh_discretize(self.nominal_plant(), self.T_s)

    def observer_config(self, nominal: DiscretePlant | None = None) -> ObserverConfig:
        nominal = nominal or zoh_discretize(self.nominal_plant(), self.T_s)
        return ObserverConfig(self.observer.g_D, nominal)

    def feedback_gains(self) -> FeedbackGains:
        return FeedbackGains(self.gains.K_p, self.gains.K_v)

    def pid_config(self) -> PIDConfig:
        return PIDConfig(self.pid.K_p, self.pid.K_i, self.pid.K_d)

    def disturbance_profile(self) -> DisturbanceProfile:
        return _to_disturbance(self.scenario.disturbance)

    def reference_profile(self) -> ReferenceProfile:
        return ReferenceProfile(**self.scenario.reference.model_dump())

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.scenario.horizon / self.T_s)))

    def to_json_dict(self) -> dict:
        return self.model_dump(mode="json", by_alias=False)


def _line_of(text: str, loc: tuple) -> int | None:
    pos = 0
    found = None
    for part in loc:
        if not isinstance(part, str):
            continue
        idx = text.find(f'"{part}"', pos)
        if idx < 0:
            continue
        pos = found = idx
    return None if found is None else text.count("\n", 0, found) + 1


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse and validate a JSON document; errors name the offending line when possible."""
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}:1: configuration must be a JSON object")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = tuple(err.get("loc", ()))
            line = _line_of(text, loc)
            where = f"{source}:{line}" if line else source
            field = ".".join(str(p) for p in loc) or "config"
            msg = err["msg"].removeprefix("Value error, ")
            lines.append(f"{where}: {field}: {msg}")
        raise ConfigError("\n".join(lines)) from None
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config(text, str(p))
