"""
Path-integral Monte-Carlo estimator.

A batch holds N rollouts, their costs S and weights w = exp(-S / lambda).
The control estimate is the weight-averaged perturbation; it is computed with the
max-log-weight shift, which cancels in the ratio. The weight mean E1 keeps its
absolute scale and is therefore summed unshifted.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from complexity_engine.bounds import CappedValue
from cost_engine.costs import CostSpec, trajectory_costs
from dynamics_service.models import DeltaMode, DynamicsFn, noise_gain
from dynamics_service.rollout import Rollout, sample_rollouts
from errors import RejectedBatchError, RejectedInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PiConfig:
    num_samples: int
    lam: float
    horizon: int
    dt: float
    nominal: np.ndarray
    seed: int = 0
    delta_mode: DeltaMode = DeltaMode.FOLDED
    # Zero-noise test mode: every rollout follows the nominal exactly
    noise_enabled: bool = True
    threads: int = field(default=1, compare=False)

    def __post_init__(self) -> None:
        if self.num_samples < 1:
            raise RejectedInputError(f"num_samples must be >= 1, got {self.num_samples}")
        if not self.lam > 0:
            raise RejectedInputError(f"lambda must be positive, got {self.lam}")
        if self.horizon < 1:
            raise RejectedInputError(f"horizon must be >= 1, got {self.horizon}")
        if not self.dt > 0:
            raise RejectedInputError(f"dt must be positive, got {self.dt}")
        nominal = np.asarray(self.nominal, dtype=float)
        if nominal.ndim != 2 or nominal.shape[0] != self.horizon:
            raise RejectedInputError(f"nominal must have shape ({self.horizon}, m), got {nominal.shape}")
        object.__setattr__(self, "nominal", nominal)
        object.__setattr__(self, "delta_mode", DeltaMode(self.delta_mode))
        object.__setattr__(self, "seed", int(self.seed))

    @classmethod
    def zero_nominal(cls, m: int, horizon: int, **kwargs) -> "PiConfig":
        return cls(horizon=horizon, nominal=np.zeros((horizon, m)), **kwargs)

    @property
    def m(self) -> int:
        return self.nominal.shape[1]

    @property
    def noise_gain(self) -> float:
        return noise_gain(self.delta_mode, self.dt)

    def with_seed(self, seed: int) -> "PiConfig":
        return replace(self, seed=seed)


@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    states: np.ndarray  # (N, T+1, n)
    noises: np.ndarray  # (N, T, m) raw standard-normal draws
    costs: np.ndarray  # (N,)
    lam: float
    seed: int
    noise_gain: float = 1.0
    log_weights: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        costs = np.asarray(self.costs, dtype=float)
        if costs.ndim != 1 or costs.shape[0] == 0:
            raise RejectedBatchError(f"batch costs must be a nonempty vector, got shape {costs.shape}")
        if costs.shape[0] != self.states.shape[0] or costs.shape[0] != self.noises.shape[0]:
            raise RejectedBatchError("costs, states and noises are not aligned")
        if np.any(np.isnan(costs)):
            raise RejectedBatchError(f"{int(np.isnan(costs).sum())} rollout costs are NaN")
        if not np.any(np.isfinite(costs)):
            raise RejectedBatchError("no rollout has a finite cost")
        log_weights = -costs / self.lam
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "log_weights", log_weights)
        object.__setattr__(self, "weights", np.exp(log_weights))

    @property
    def size(self) -> int:
        return self.costs.shape[0]

    @property
    def horizon(self) -> int:
        return self.noises.shape[1]

    @property
    def underflow(self) -> bool:
        """Every raw weight rounded to exactly zero."""
        return not bool(np.any(self.weights > 0.0))

    def rollout(self, index: int) -> Rollout:
        return Rollout(states=self.states[index], noises=self.noises[index], seed=self.seed, sample_index=index)

    def head(self, count: int) -> "TrajectoryBatch":
        """The first count samples, as their own batch."""
        if not 1 <= count <= self.size:
            raise RejectedInputError(f"head size {count} outside [1, {self.size}]")
        return TrajectoryBatch(
            states=self.states[:count],
            noises=self.noises[:count],
            costs=self.costs[:count],
            lam=self.lam,
            seed=self.seed,
            noise_gain=self.noise_gain,
        )


def build_batch(dyn: DynamicsFn, spec: CostSpec, cfg: PiConfig, x0: np.ndarray) -> TrajectoryBatch:
    """Sample cfg.num_samples rollouts around cfg.nominal and score them under spec."""
    if not math.isclose(cfg.lam, spec.lam, rel_tol=1e-12):
        raise RejectedInputError(f"lambda disagrees: PI config {cfg.lam}, cost spec {spec.lam}")
    if cfg.m != dyn.m:
        raise RejectedInputError(f"nominal control dimension {cfg.m} != model input dimension {dyn.m}")
    states, noises = sample_rollouts(
        dyn,
        cfg.nominal,
        x0,
        cfg.seed,
        cfg.num_samples,
        noise_gain=cfg.noise_gain,
        noise_enabled=cfg.noise_enabled,
        threads=cfg.threads,
    )
    with np.errstate(over="ignore", invalid="ignore"):
        costs = trajectory_costs(states, spec)
    return TrajectoryBatch(
        states=states,
        noises=noises,
        costs=costs,
        lam=cfg.lam,
        seed=cfg.seed,
        noise_gain=cfg.noise_gain,
    )


def _shifted_weights(batch: TrajectoryBatch) -> np.ndarray:
    return np.exp(batch.log_weights - np.max(batch.log_weights))


def estimate_control(batch: TrajectoryBatch, cfg: PiConfig) -> np.ndarray:
    """u*_t = u_t + sum_n w_n g delta_t^(n) / sum_n w_n for every t; shape (T, m)."""
    if cfg.nominal.shape != batch.noises.shape[1:]:
        raise RejectedInputError(f"nominal {cfg.nominal.shape} does not match batch noises {batch.noises.shape[1:]}")
    w = _shifted_weights(batch)
    numerator = np.einsum("n,ntm->tm", w, batch.noises)
    return cfg.nominal + batch.noise_gain * numerator / np.sum(w)


def empirical_weight_mean(batch: TrajectoryBatch) -> float:
    """E1 = (1/N) sum_n w_n, raw domain, compensated summation."""
    value = math.fsum(batch.weights.tolist()) / batch.size
    if value == 0.0:
        logger.debug(
            "All %d weights underflow to zero (min cost %.6g, lambda %g)",
            batch.size,
            float(np.min(batch.costs)),
            batch.lam,
        )
    return value


def weight_mean_stderr(batch: TrajectoryBatch) -> float:
    if batch.size < 2:
        return math.inf
    return float(np.std(batch.weights, ddof=1) / math.sqrt(batch.size))


def log_weight_mean(batch: TrajectoryBatch) -> float:
    """ln E1, exact even when every raw weight underflows."""
    return float(logsumexp(batch.log_weights) - math.log(batch.size))


def inverse_weight_mean(batch: TrajectoryBatch) -> CappedValue:
    """1 / E1 as a log-domain value."""
    return CappedValue.from_log(-log_weight_mean(batch))


def effective_sample_size(batch: TrajectoryBatch) -> float:
    """Kish ESS (sum w)^2 / sum w^2."""
    lw = batch.log_weights
    return float(math.exp(2.0 * logsumexp(lw) - logsumexp(2.0 * lw)))


def _check_step(batch: TrajectoryBatch, t: int) -> None:
    if not 0 <= t < batch.horizon:
        raise RejectedInputError(f"step {t} outside [0, {batch.horizon})")


def _normalized_weights(batch: TrajectoryBatch, e_w_ref: float | None) -> np.ndarray:
    if e_w_ref is None:
        # w_n / E1 in log domain
        return np.exp(batch.log_weights - log_weight_mean(batch))
    if not e_w_ref > 0:
        raise RejectedInputError(f"reference weight mean must be positive, got {e_w_ref}")
    return batch.weights / e_w_ref


def empirical_weighted_noise(batch: TrajectoryBatch, t: int, e_w_ref: float | None = None) -> np.ndarray:
    """
    E2 at step t: (1/N) sum_n w_n delta_t^(n) / E_w_ref, per control component.
    E_w_ref defaults to the batch's own E1.
    """
    _check_step(batch, t)
    ratio = _normalized_weights(batch, e_w_ref)
    return (ratio[:, None] * batch.noises[:, t]).mean(axis=0)


def _weighted_control_samples(batch: TrajectoryBatch, t: int) -> np.ndarray:
    _check_step(batch, t)
    if batch.size < 2:
        raise RejectedInputError(f"sample variance needs N >= 2, got {batch.size}")
    return _normalized_weights(batch, None)[:, None] * batch.noises[:, t]


def empirical_variance_weighted_control(batch: TrajectoryBatch, t: int) -> np.ndarray:
    """Unbiased sample variance of w_n [delta_t^(n)]_i / E1, per component i."""
    return np.var(_weighted_control_samples(batch, t), axis=0, ddof=1)


def empirical_variance_stderr(batch: TrajectoryBatch, t: int) -> np.ndarray:
    """Large-sample standard error of the sample variance: sqrt((m4 - s^4) / N)."""
    y = _weighted_control_samples(batch, t)
    centered = y - y.mean(axis=0)
    m4 = np.mean(centered**4, axis=0)
    s2 = np.var(y, axis=0, ddof=1)
    return np.sqrt(np.maximum(m4 - s2 * s2, 0.0) / batch.size)
