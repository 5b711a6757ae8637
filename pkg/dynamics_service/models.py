"""
Discrete-time stochastic system definitions.

Two families share the DynamicsFn interface:
  - LtvModel: x_{t+1} = A_t x_t + B_t (u_t + delta_t), time-indexed matrices.
  - SimpleCar: kinematic car with state (px, py, theta, phi) and input (v, omega).

All step functions accept a leading batch axis, so one call advances N rollouts.
"""
from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from errors import RejectedInputError

logger = logging.getLogger(__name__)

# Admissible stability parameter for the UAV double integrator
DOUBLE_INTEGRATOR_A_RANGE = (-0.5, 0.5)

NARROW_STEERING = (-math.pi / 12, math.pi / 12)
WIDE_STEERING = (-math.pi / 2 + 0.01, math.pi / 2 - 0.01)


class DeltaMode(str, Enum):
    """How the standard-normal draw enters the input channel."""

    # B already carries the full noise gain (the UAV/UGV models)
    FOLDED = "folded"
    # Euler-Maruyama diffusion: perturbation delta / sqrt(dt) on the control
    DIFFUSION = "diffusion"


def noise_gain(mode: DeltaMode | str, dt: float) -> float:
    """Scale applied to delta before it enters the dynamics (and the estimator)."""
    mode = DeltaMode(mode)
    if mode is DeltaMode.FOLDED:
        return 1.0
    if dt <= 0:
        raise RejectedInputError(f"dt must be positive, got {dt}")
    return 1.0 / math.sqrt(dt)


class DynamicsFn(ABC):
    """Single-step transition (t, state, control, noise) -> next state."""

    @property
    @abstractmethod
    def n(self) -> int:
        """State dimension."""

    @property
    @abstractmethod
    def m(self) -> int:
        """Control dimension."""

    @abstractmethod
    def step(self, t: int, x: np.ndarray, u: np.ndarray, delta: np.ndarray) -> np.ndarray:
        """Advance x (shape (..., n)) by one step."""

    def describe(self) -> dict[str, Any]:
        return {"kind": type(self).__name__, "n": self.n, "m": self.m}


def _as_matrix_sequence(value: Any, horizon: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 2:
        arr = np.broadcast_to(arr, (horizon, *arr.shape)).copy()
    if arr.ndim != 3 or arr.shape[0] != horizon:
        raise RejectedInputError(f"{name} must be a sequence of {horizon} matrices, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise RejectedInputError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class LtvModel(DynamicsFn):
    """Linear time-varying system with per-step (A_t, B_t)."""

    horizon: int
    A: np.ndarray
    B: np.ndarray
    name: str = field(default="ltv", compare=False)

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise RejectedInputError(f"horizon must be >= 1, got {self.horizon}")
        A = _as_matrix_sequence(self.A, self.horizon, "A")
        B = _as_matrix_sequence(self.B, self.horizon, "B")
        if A.shape[1] != A.shape[2]:
            raise RejectedInputError(f"A_t must be square, got {A.shape[1:]}")
        if B.shape[1] != A.shape[1]:
            raise RejectedInputError(f"B_t has {B.shape[1]} rows, expected {A.shape[1]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.B.shape[2]

    @classmethod
    def time_invariant(cls, A: Any, B: Any, horizon: int, name: str = "lti") -> "LtvModel":
        return cls(horizon=horizon, A=np.asarray(A, dtype=float), B=np.asarray(B, dtype=float), name=name)

    def with_horizon(self, horizon: int) -> "LtvModel":
        """Re-index a time-invariant model to another horizon."""
        if not (np.allclose(self.A, self.A[0]) and np.allclose(self.B, self.B[0])):
            raise RejectedInputError("with_horizon is only defined for time-invariant models")
        return LtvModel.time_invariant(self.A[0], self.B[0], horizon, name=self.name)

    def step(self, t: int, x: np.ndarray, u: np.ndarray, delta: np.ndarray) -> np.ndarray:
        return step_ltv(self, t, x, u, delta)

    def describe(self) -> dict[str, Any]:
        return {**super().describe(), "name": self.name, "horizon": self.horizon}


def step_ltv(model: LtvModel, t: int, x: np.ndarray, u: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """A_t x + B_t (u + delta); x may carry a leading batch axis."""
    if not 0 <= t < model.horizon:
        raise RejectedInputError(f"step index {t} outside [0, {model.horizon})")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if x.shape[-1] != model.n or u.shape[-1] != model.m or delta.shape[-1] != model.m:
        raise RejectedInputError(
            f"dimension mismatch: x {x.shape}, u {u.shape}, delta {delta.shape} for n={model.n}, m={model.m}"
        )
    return x @ model.A[t].T + (u + delta) @ model.B[t].T


def make_double_integrator(a: float, horizon: int = 1) -> LtvModel:
    """
    UAV planar double integrator with velocity damping 1 + a.
    State (x, y, vx, vy), input accelerations; 0.1 couplings on both.
    """
    lo, hi = DOUBLE_INTEGRATOR_A_RANGE
    if not lo <= a <= hi:
        raise RejectedInputError(f"stability parameter a={a} outside [{lo}, {hi}]")
    A = np.array(
        [
            [1.0, 0.0, 0.1, 0.0],
            [0.0, 1.0, 0.0, 0.1],
            [0.0, 0.0, 1.0 + a, 0.0],
            [0.0, 0.0, 0.0, 1.0 + a],
        ]
    )
    B = np.array(
        [
            [0.0, 0.0],
            [0.0, 0.0],
            [0.1, 0.0],
            [0.0, 0.1],
        ]
    )
    return LtvModel.time_invariant(A, B, horizon, name=f"double_integrator(a={a:g})")


def step_simple_car(
    state: np.ndarray,
    u: np.ndarray,
    delta: np.ndarray,
    L: float,
    dt: float,
    steer_limits: tuple[float, float],
) -> np.ndarray:
    """
    Kinematic car: velocity and steering-rate inputs, both perturbed.
    The steering angle is saturated to steer_limits after the update.
    """
    state = np.asarray(state, dtype=float)
    u = np.asarray(u, dtype=float)
    delta = np.asarray(delta, dtype=float)
    px, py, theta, phi = (state[..., i] for i in range(4))
    v = u[..., 0] + delta[..., 0]
    omega = u[..., 1] + delta[..., 1]
    out = np.empty(np.broadcast_shapes(state.shape, v.shape + (4,)))
    out[..., 0] = px + np.cos(theta) * v * dt
    out[..., 1] = py + np.sin(theta) * v * dt
    out[..., 2] = theta + (np.tan(phi) / L) * v * dt
    out[..., 3] = np.clip(phi + omega * dt, steer_limits[0], steer_limits[1])
    return out


@dataclass(frozen=True)
class SimpleCar(DynamicsFn):
    wheelbase: float = 0.5
    dt: float = 0.1
    steer_limits: tuple[float, float] = NARROW_STEERING

    def __post_init__(self) -> None:
        if self.wheelbase <= 0:
            raise RejectedInputError(f"wheelbase must be positive, got {self.wheelbase}")
        if self.dt <= 0:
            raise RejectedInputError(f"dt must be positive, got {self.dt}")
        lo, hi = self.steer_limits
        if not lo <= hi:
            raise RejectedInputError(f"empty steering interval [{lo}, {hi}]")

    @property
    def n(self) -> int:
        return 4

    @property
    def m(self) -> int:
        return 2

    def step(self, t: int, x: np.ndarray, u: np.ndarray, delta: np.ndarray) -> np.ndarray:
        return step_simple_car(x, u, delta, self.wheelbase, self.dt, self.steer_limits)

    def describe(self) -> dict[str, Any]:
        return {
            **super().describe(),
            "wheelbase": self.wheelbase,
            "dt": self.dt,
            "steer_limits": list(self.steer_limits),
        }
