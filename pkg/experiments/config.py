"""
Experiment configuration: versioned JSON documents validated with pydantic.
Unknown keys are rejected; validation errors carry the dotted path of the offending field.
"""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Annotated, Any, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError, model_validator

from complexity_engine.bounds import ComplexityQuery, HoeffdingForm
from cost_engine.costs import CostSpec
from cost_engine.obstacles import ConvexObstacle
from dynamics_service.models import (
    NARROW_STEERING,
    WIDE_STEERING,
    DeltaMode,
    SimpleCar,
    make_double_integrator,
)
from errors import ConfigError
from mppi_engine.estimator import PiConfig

Matrix = Union[list[float], list[list[float]]]


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)


class ObstacleConfig(StrictModel):
    vertices: list[tuple[float, float]] = Field(min_length=1)
    margin: float = Field(default=0.0, ge=0.0)
    projection: tuple[int, int] = (0, 1)

    def build(self) -> ConvexObstacle:
        return ConvexObstacle(np.array(self.vertices, dtype=float), self.margin, self.projection)


def _matrix(value: Matrix, n: int, name: str) -> np.ndarray:
    """A flat list is a diagonal; nested lists are the full matrix."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 1:
        arr = np.diag(arr)
    if arr.shape != (n, n):
        raise ValueError(f"{name} must be {n}x{n} or a length-{n} diagonal, got shape {arr.shape}")
    return arr


class CostConfig(StrictModel):
    Q: Matrix
    Q_T: Matrix | None = None
    x_tgt: list[float]
    omega_c: float = Field(default=0.0, ge=0.0)
    obstacles: list[ObstacleConfig] = Field(default_factory=list)
    analytic_indicator: bool = True

    @model_validator(mode="after")
    def _check_shapes(self) -> "CostConfig":
        n = len(self.x_tgt)
        _matrix(self.Q, n, "Q")
        if self.Q_T is not None:
            _matrix(self.Q_T, n, "Q_T")
        return self

    def build(self, dt: float, lam: float) -> CostSpec:
        n = len(self.x_tgt)
        Q = _matrix(self.Q, n, "Q")
        return CostSpec(
            Q=Q,
            Q_T=Q if self.Q_T is None else _matrix(self.Q_T, n, "Q_T"),
            x_tgt=np.array(self.x_tgt, dtype=float),
            dt=dt,
            lam=lam,
            omega_c=self.omega_c,
            obstacles=tuple(o.build() for o in self.obstacles),
            analytic_indicator=self.analytic_indicator,
        )


class PiParams(StrictModel):
    num_samples: int = Field(default=10000, ge=1)
    lam: float = Field(alias="lambda", gt=0.0)
    horizon: int = Field(default=40, ge=1)
    dt: float = Field(default=0.1, gt=0.0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    delta_mode: DeltaMode = DeltaMode.FOLDED
    noise_enabled: bool = True

    def build(self, m: int, horizon: int | None = None, threads: int = 1) -> PiConfig:
        horizon = self.horizon if horizon is None else horizon
        return PiConfig(
            num_samples=self.num_samples,
            lam=self.lam,
            horizon=horizon,
            dt=self.dt,
            nominal=np.zeros((horizon, m)),
            seed=self.seed,
            delta_mode=self.delta_mode,
            noise_enabled=self.noise_enabled,
            threads=threads,
        )


class QueryConfig(StrictModel):
    eps1: float = Field(default=0.01, gt=0.0)
    eps2: float = Field(default=0.1, gt=0.0)
    rho1: float = Field(default=0.05, gt=0.0, lt=1.0)
    rho2: float = Field(default=0.05, gt=0.0, lt=1.0)
    hoeffding_form: HoeffdingForm = HoeffdingForm.EQ9

    def build(self, lam: float) -> ComplexityQuery:
        return ComplexityQuery(eps1=self.eps1, eps2=self.eps2, rho1=self.rho1, rho2=self.rho2, lam=lam)


class SteeringConfig(StrictModel):
    name: str = Field(min_length=1)
    limits: tuple[float, float]

    @model_validator(mode="after")
    def _ordered(self) -> "SteeringConfig":
        lo, hi = self.limits
        if not lo <= hi or not (-math.pi / 2 < lo and hi < math.pi / 2):
            raise ValueError(f"steering limits must be ordered inside (-pi/2, pi/2), got {self.limits}")
        return self


DEFAULT_STEERING = [
    SteeringConfig(name="narrow", limits=NARROW_STEERING),
    SteeringConfig(name="wide", limits=WIDE_STEERING),
]


class _ExperimentBase(StrictModel):
    schema_version: Literal[1]
    x0: list[float]
    pi: PiParams
    cost: CostConfig

    @model_validator(mode="after")
    def _check_state_dimension(self) -> "_ExperimentBase":
        if len(self.x0) != len(self.cost.x_tgt):
            raise ValueError(f"x0 has {len(self.x0)} entries, cost.x_tgt has {len(self.cost.x_tgt)}")
        if len(self.x0) != 4:
            raise ValueError(f"both models have a 4-dimensional state, got x0 of length {len(self.x0)}")
        return self

    def x0_array(self) -> np.ndarray:
        return np.array(self.x0, dtype=float)


class UavConfig(_ExperimentBase):
    experiment: Literal["uav"]
    a_values: list[float] = Field(default_factory=lambda: [-0.5], min_length=1)
    outer_steps: int = Field(default=7000, ge=1)
    runs: int = Field(default=1, ge=1)
    actuation_noise: bool = True

    @model_validator(mode="after")
    def _check_a(self) -> "UavConfig":
        for a in self.a_values:
            make_double_integrator(a)
        return self


class UgvConfig(_ExperimentBase):
    experiment: Literal["ugv"]
    wheelbase: float = Field(default=0.5, gt=0.0)
    steering: list[SteeringConfig] = Field(default_factory=lambda: list(DEFAULT_STEERING), min_length=1)
    outer_steps: int = Field(default=300, ge=1)
    runs: int = Field(default=5, ge=1)
    actuation_noise: bool = True
    dispersion_window: float = Field(default=0.1, gt=0.0, le=1.0)

    def car(self, steering: SteeringConfig) -> SimpleCar:
        return SimpleCar(wheelbase=self.wheelbase, dt=self.pi.dt, steer_limits=steering.limits)


class ComplexityConfig(_ExperimentBase):
    experiment: Literal["complexity"]
    model: Literal["double_integrator", "simple_car"] = "double_integrator"
    route: Literal["analytic", "empirical"] = "analytic"
    a_values: list[float] = Field(default_factory=lambda: [-0.5, -0.1, 0.0, 0.1])
    wheelbase: float = Field(default=0.5, gt=0.0)
    steering: list[SteeringConfig] = Field(default_factory=lambda: list(DEFAULT_STEERING))
    horizons: list[int] = Field(default_factory=lambda: [50, 100, 150], min_length=1)
    pilot_samples: int = Field(default=50000, ge=1)
    query: QueryConfig = Field(default_factory=QueryConfig)

    @model_validator(mode="after")
    def _check_route(self) -> "ComplexityConfig":
        if self.model == "simple_car" and self.route == "analytic":
            raise ValueError("the analytic route needs a linear model; use route 'empirical' for simple_car")
        if any(h < 1 for h in self.horizons):
            raise ValueError("horizons must be positive")
        if self.model == "double_integrator":
            for a in self.a_values:
                make_double_integrator(a)
        return self


class VarianceSweepConfig(_ExperimentBase):
    experiment: Literal["variance_sweep"]
    a_values: list[float] = Field(default_factory=lambda: [-0.5, -0.1, 0.0], min_length=1)
    horizons: list[int] = Field(default_factory=lambda: [10, 20, 30], min_length=1)

    @model_validator(mode="after")
    def _check_grid(self) -> "VarianceSweepConfig":
        for a in self.a_values:
            make_double_integrator(a)
        if any(h < 1 for h in self.horizons):
            raise ValueError("horizons must be positive")
        if self.pi.num_samples < 2:
            raise ValueError("the sample variance needs pi.num_samples >= 2")
        return self


class CoverageConfig(_ExperimentBase):
    experiment: Literal["coverage"]
    a: float = -0.5
    repetitions: int = Field(default=1000, ge=1)
    reference_samples: int = Field(default=200_000, ge=1)
    pilot_samples: int = Field(default=20_000, ge=1)
    sample_scale: float = Field(default=1.0, gt=0.0)
    query: QueryConfig = Field(default_factory=lambda: QueryConfig(eps1=0.05, eps2=0.1))

    @model_validator(mode="after")
    def _check_a(self) -> "CoverageConfig":
        make_double_integrator(self.a)
        return self


ExperimentConfig = Annotated[
    Union[UavConfig, UgvConfig, ComplexityConfig, VarianceSweepConfig, CoverageConfig],
    Field(discriminator="experiment"),
]

_ADAPTER: TypeAdapter[Any] = TypeAdapter(ExperimentConfig)


def _format_path(loc: tuple[Any, ...], tag: Any) -> str:
    parts = list(loc)
    if parts and parts[0] == tag:
        parts = parts[1:]
    return ".".join(str(p) for p in parts) or "<root>"


def parse_config(document: dict[str, Any]) -> ExperimentConfig:
    """Validate a decoded JSON document; raises ConfigError naming the first failing field."""
    if not isinstance(document, dict):
        raise ConfigError("configuration must be a JSON object")
    try:
        return _ADAPTER.validate_python(document)
    except ValidationError as e:
        first = e.errors()[0]
        path = _format_path(tuple(first["loc"]), document.get("experiment"))
        raise ConfigError(first["msg"], path=path) from e
    except ValueError as e:
        # Model constructors raise RejectedInputError inside validators
        raise ConfigError(str(e)) from e


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}", path=str(path)) from e
    return parse_config(document)


def config_hash(config: BaseModel, **overrides: Any) -> str:
    """Short sha256 over the canonical validated config plus command-line overrides."""
    payload = {
        "config": config.model_dump(mode="json", by_alias=True),
        "overrides": {k: v for k, v in sorted(overrides.items()) if v is not None},
    }
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
