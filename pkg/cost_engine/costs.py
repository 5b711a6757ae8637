"""
State-dependent running and terminal costs, and the trajectory cost-to-go
S = terminal(x_T) + sum_{t<T} running(x_t) dt.

Sampled costs use exact obstacle membership (hull inflated by the margin).
Everything accepts a leading batch axis so one call scores a whole batch.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from cost_engine.obstacles import ConvexObstacle
from dynamics_service.rollout import Rollout
from errors import RejectedInputError

logger = logging.getLogger(__name__)


def check_positive_definite(Q: Any, name: str = "Q") -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise RejectedInputError(f"{name} must be square, got shape {Q.shape}")
    if not np.allclose(Q, Q.T, rtol=0.0, atol=1e-9 * max(1.0, float(np.max(np.abs(Q), initial=0.0)))):
        raise RejectedInputError(f"{name} is not symmetric")
    if np.linalg.eigvalsh(Q)[0] <= 0.0:
        raise RejectedInputError(f"{name} is not positive definite")
    return Q


@dataclass(frozen=True, eq=False)
class CostSpec:
    Q: np.ndarray
    Q_T: np.ndarray
    x_tgt: np.ndarray
    dt: float
    lam: float
    omega_c: float = 0.0
    obstacles: tuple[ConvexObstacle, ...] = field(default_factory=tuple)
    # Charge the conservative collision set in the analytic E[S]
    analytic_indicator: bool = True

    def __post_init__(self) -> None:
        Q = check_positive_definite(self.Q, "Q")
        Q_T = check_positive_definite(self.Q_T, "Q_T")
        x_tgt = np.asarray(self.x_tgt, dtype=float)
        if Q_T.shape != Q.shape or x_tgt.shape != (Q.shape[0],):
            raise RejectedInputError(f"Q {Q.shape}, Q_T {Q_T.shape} and x_tgt {x_tgt.shape} disagree")
        if not self.dt > 0:
            raise RejectedInputError(f"dt must be positive, got {self.dt}")
        if not self.lam > 0:
            raise RejectedInputError(f"lambda must be positive, got {self.lam}")
        if not self.omega_c >= 0:
            raise RejectedInputError(f"omega_C must be nonnegative, got {self.omega_c}")
        for obs in self.obstacles:
            if max(obs.projection) >= Q.shape[0]:
                raise RejectedInputError(f"obstacle projection {obs.projection} invalid for state dimension {Q.shape[0]}")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "Q_T", Q_T)
        object.__setattr__(self, "x_tgt", x_tgt)
        object.__setattr__(self, "obstacles", tuple(self.obstacles))

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    def describe(self) -> dict[str, Any]:
        return {
            "dt": self.dt,
            "lambda": self.lam,
            "omega_c": self.omega_c,
            "obstacles": len(self.obstacles),
            "analytic_indicator": self.analytic_indicator,
        }


def _check_states(x: np.ndarray, spec: CostSpec) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.n:
        raise RejectedInputError(f"state dimension {x.shape[-1]} != cost dimension {spec.n}")
    return x


def _quadratic(x: np.ndarray, Q: np.ndarray, x_tgt: np.ndarray) -> np.ndarray:
    d = x - x_tgt
    # PD Q; clamp rounding below zero
    return np.maximum(np.einsum("...i,ij,...j->...", d, Q, d), 0.0)


def obstacle_hits(x: np.ndarray, spec: CostSpec) -> np.ndarray:
    """Number of obstacles (with margin) each state hits, shape x.shape[:-1]."""
    x = _check_states(x, spec)
    hits = np.zeros(x.shape[:-1], dtype=int)
    for obs in spec.obstacles:
        hits += obs.contains(x)
    return hits


def obstacle_penetrations(x: np.ndarray, spec: CostSpec) -> np.ndarray:
    """Number of bare hulls (zero margin) each state lies in."""
    x = _check_states(x, spec)
    count = np.zeros(x.shape[:-1], dtype=int)
    for obs in spec.obstacles:
        count += obs.contains(x, margin=0.0)
    return count


def running_costs(x: np.ndarray, spec: CostSpec) -> np.ndarray:
    x = _check_states(x, spec)
    cost = _quadratic(x, spec.Q, spec.x_tgt)
    if spec.omega_c > 0 and spec.obstacles:
        cost = cost + spec.omega_c * obstacle_hits(x, spec)
    return cost


def running_cost(x: np.ndarray, spec: CostSpec) -> float:
    """(x - x_tgt)^T Q (x - x_tgt) + omega_C * #obstacles hit."""
    x = _check_states(x, spec)
    if x.ndim != 1:
        raise RejectedInputError(f"running_cost expects a single state, got shape {x.shape}")
    return float(running_costs(x, spec))


def terminal_costs(x_T: np.ndarray, spec: CostSpec) -> np.ndarray:
    return _quadratic(_check_states(x_T, spec), spec.Q_T, spec.x_tgt)


def terminal_cost(x_T: np.ndarray, spec: CostSpec) -> float:
    x_T = _check_states(x_T, spec)
    if x_T.ndim != 1:
        raise RejectedInputError(f"terminal_cost expects a single state, got shape {x_T.shape}")
    return float(terminal_costs(x_T, spec))


def trajectory_costs(states: np.ndarray, spec: CostSpec) -> np.ndarray:
    """S for a batch of state paths (N, T+1, n) -> (N,)."""
    states = _check_states(states, spec)
    if states.ndim != 3 or states.shape[1] < 2:
        raise RejectedInputError(f"states must have shape (N, T+1, n) with T >= 1, got {states.shape}")
    running = running_costs(states[:, :-1], spec).sum(axis=1) * spec.dt
    return running + terminal_costs(states[:, -1], spec)


def trajectory_cost(rollout: Rollout, spec: CostSpec) -> float:
    return float(trajectory_costs(rollout.states[None], spec)[0])
