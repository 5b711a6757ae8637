"""
Closed-loop receding-horizon harness.

Each outer step k: sample a batch from the true state (inner seed derived from
(master_seed, k)), estimate u*, apply u*_0 plus one fresh actuation draw, advance
the plant. The nominal control is reset to zero every step.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Any, Literal

import numpy as np

from cost_engine.costs import CostSpec, obstacle_hits, obstacle_penetrations
from dynamics_service.models import DynamicsFn
from dynamics_service.streams import actuation_noise, derive_seed
from errors import RejectedBatchError, RejectedInputError
from mppi_engine.estimator import (
    PiConfig,
    build_batch,
    effective_sample_size,
    empirical_variance_weighted_control,
    empirical_weight_mean,
    estimate_control,
)

logger = logging.getLogger(__name__)

DIVERGENCE_NORM = 1e9


@dataclass(frozen=True, eq=False)
class MpcRunConfig:
    outer_steps: int
    inner: PiConfig
    spec: CostSpec
    dyn: DynamicsFn
    x0: np.ndarray
    actuation_noise: bool = True
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.outer_steps < 1:
            raise RejectedInputError(f"outer_steps must be >= 1, got {self.outer_steps}")
        x0 = np.asarray(self.x0, dtype=float)
        if x0.shape != (self.dyn.n,):
            raise RejectedInputError(f"x0 must have shape ({self.dyn.n},), got {x0.shape}")
        if self.spec.n != self.dyn.n or self.inner.m != self.dyn.m:
            raise RejectedInputError("cost spec, PI config and dynamics disagree on dimensions")
        object.__setattr__(self, "x0", x0)


@dataclass(frozen=True, eq=False)
class StepRecord:
    step: int
    control: np.ndarray  # applied u*_0, before actuation noise
    state: np.ndarray  # true state after the step
    e1_hat: float
    min_cost: float
    variance: np.ndarray  # per-component variance of w delta_0 / E1
    ess: float
    margin_hits: int
    penetrations: int
    wall_clock: float = field(default=0.0, compare=False)


@dataclass(eq=False)
class RunLog:
    x0: np.ndarray
    records: list[StepRecord] = field(default_factory=list)
    status: Literal["completed", "diverged"] = "completed"
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def diverged(self) -> bool:
        return self.status == "diverged"

    def states(self) -> np.ndarray:
        """(K+1, n) true states including x0."""
        return np.vstack([self.x0[None]] + [r.state[None] for r in self.records])

    def controls(self) -> np.ndarray:
        if not self.records:
            return np.zeros((0, 0))
        return np.vstack([r.control[None] for r in self.records])

    @property
    def terminal_state(self) -> np.ndarray:
        return self.records[-1].state if self.records else self.x0

    @property
    def margin_hits(self) -> int:
        return sum(r.margin_hits for r in self.records)

    @property
    def penetrations(self) -> int:
        return sum(r.penetrations for r in self.records)


class MpcRunner:
    """
    Runs one closed-loop experiment. Only u*_0 of each inner solve touches the plant;
    the remaining horizon is kept for diagnostics only.
    """

    def __init__(self, cfg: MpcRunConfig) -> None:
        self.cfg = cfg
        self._zero_nominal = np.zeros_like(cfg.inner.nominal)

    def _inner_config(self, k: int) -> PiConfig:
        return replace(self.cfg.inner, seed=derive_seed(self.cfg.master_seed, k), nominal=self._zero_nominal)

    def _plant_step(self, x: np.ndarray, u: np.ndarray, k: int) -> np.ndarray:
        cfg = self.cfg
        if cfg.actuation_noise:
            delta = cfg.inner.noise_gain * actuation_noise(cfg.master_seed, k, cfg.dyn.m)
        else:
            delta = np.zeros(cfg.dyn.m)
        return cfg.dyn.step(0, x, u, delta)

    def _solve(self, x: np.ndarray, k: int) -> tuple[np.ndarray, dict[str, Any]]:
        inner = self._inner_config(k)
        batch = build_batch(self.cfg.dyn, self.cfg.spec, inner, x)
        u_star = estimate_control(batch, inner)
        if batch.size >= 2:
            variance = empirical_variance_weighted_control(batch, 0)
        else:
            variance = np.full(self.cfg.dyn.m, np.nan)
        summary = {
            "e1_hat": empirical_weight_mean(batch),
            "min_cost": float(np.min(batch.costs)),
            "variance": variance,
            "ess": effective_sample_size(batch),
        }
        return u_star[0], summary

    def run(self) -> RunLog:
        cfg = self.cfg
        log = RunLog(
            x0=cfg.x0.copy(),
            metadata={
                "master_seed": cfg.master_seed,
                "actuation_noise": cfg.actuation_noise,
                "delta_mode": cfg.inner.delta_mode.value,
                "noise_enabled": cfg.inner.noise_enabled,
                "dynamics": cfg.dyn.describe(),
            },
        )
        x = cfg.x0.copy()
        for k in range(cfg.outer_steps):
            started = time.perf_counter()
            try:
                u0, summary = self._solve(x, k)
            except RejectedBatchError as e:
                logger.warning("Run with master seed %d diverged at step %d: %s", cfg.master_seed, k, e)
                log.status = "diverged"
                break
            x = self._plant_step(x, u0, k)
            log.records.append(
                StepRecord(
                    step=k,
                    control=u0,
                    state=x,
                    margin_hits=int(obstacle_hits(x, cfg.spec)),
                    penetrations=int(obstacle_penetrations(x, cfg.spec)),
                    wall_clock=time.perf_counter() - started,
                    **summary,
                )
            )
            if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_NORM:
                logger.warning("Run with master seed %d diverged at step %d (|x| = %g)", cfg.master_seed, k, np.linalg.norm(x))
                log.status = "diverged"
                break
        return log


def run_mpc(cfg: MpcRunConfig) -> RunLog:
    return MpcRunner(cfg).run()


def across_run_dispersion(logs: list[RunLog], coords: tuple[int, ...] = (0, 1)) -> np.ndarray:
    """Per-step position variance across runs, summed over coords; truncated to the shortest run."""
    if len(logs) < 2:
        raise RejectedInputError("dispersion needs at least two runs")
    paths = [log.states()[:, list(coords)] for log in logs]
    length = min(len(p) for p in paths)
    stacked = np.stack([p[:length] for p in paths])
    return np.var(stacked, axis=0).sum(axis=1)


def terminal_window_mean(series: np.ndarray, fraction: float = 0.1) -> float:
    """Mean over the last fraction of the series (at least one entry)."""
    if not 0 < fraction <= 1:
        raise RejectedInputError(f"window fraction must lie in (0, 1], got {fraction}")
    count = max(1, int(round(len(series) * fraction)))
    return float(np.mean(series[-count:]))
