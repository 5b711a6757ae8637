"""
Seeded trajectory rollout sampling.
Noise is regenerated from (seed, sample_index), so a Rollout can be reproduced bit-for-bit.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from dynamics_service.models import DynamicsFn
from dynamics_service.streams import noise_blocks
from errors import RejectedInputError

logger = logging.getLogger(__name__)

# Samples per worker task; chunking never changes results, only scheduling
CHUNK_SIZE = 1024


@dataclass(frozen=True, eq=False)
class Rollout:
    states: np.ndarray  # (T+1, n)
    noises: np.ndarray  # (T, m) raw standard-normal draws
    seed: int
    sample_index: int

    @property
    def horizon(self) -> int:
        return self.noises.shape[0]


def _check_inputs(dyn: DynamicsFn, nominal: np.ndarray, x0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    nominal = np.asarray(nominal, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if nominal.ndim != 2 or nominal.shape[1] != dyn.m:
        raise RejectedInputError(f"nominal must have shape (T, {dyn.m}), got {nominal.shape}")
    if x0.shape != (dyn.n,):
        raise RejectedInputError(f"x0 must have shape ({dyn.n},), got {x0.shape}")
    horizon = getattr(dyn, "horizon", None)
    if horizon is not None and nominal.shape[0] != horizon:
        raise RejectedInputError(f"nominal length {nominal.shape[0]} != model horizon {horizon}")
    return nominal, x0


def propagate(
    dyn: DynamicsFn,
    nominal: np.ndarray,
    x0: np.ndarray,
    noises: np.ndarray,
    noise_gain: float = 1.0,
) -> np.ndarray:
    """Iterate dyn over a batch of noise sequences (N, T, m) -> states (N, T+1, n)."""
    count, horizon, _ = noises.shape
    states = np.empty((count, horizon + 1, dyn.n))
    states[:, 0] = x0
    for t in range(horizon):
        states[:, t + 1] = dyn.step(t, states[:, t], nominal[t], noise_gain * noises[:, t])
    return states


def sample_rollouts(
    dyn: DynamicsFn,
    nominal: np.ndarray,
    x0: np.ndarray,
    seed: int,
    num_samples: int,
    *,
    noise_gain: float = 1.0,
    noise_enabled: bool = True,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Sample rollouts 0..num_samples-1 and return (states (N, T+1, n), noises (N, T, m)).
    Work is split into fixed index chunks; results are assembled in index order.
    """
    nominal, x0 = _check_inputs(dyn, nominal, x0)
    horizon = nominal.shape[0]

    def _chunk(start: int) -> tuple[np.ndarray, np.ndarray]:
        stop = min(start + CHUNK_SIZE, num_samples)
        if noise_enabled:
            noises = noise_blocks(seed, range(start, stop), horizon, dyn.m)
        else:
            noises = np.zeros((stop - start, horizon, dyn.m))
        return propagate(dyn, nominal, x0, noises, noise_gain), noises

    starts = list(range(0, num_samples, CHUNK_SIZE))
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_chunk, starts))
    else:
        parts = [_chunk(s) for s in starts]
    states = np.concatenate([p[0] for p in parts], axis=0)
    noises = np.concatenate([p[1] for p in parts], axis=0)
    return states, noises


def sample_rollout(
    dyn: DynamicsFn,
    nominal: np.ndarray,
    x0: np.ndarray,
    seed: int,
    sample_index: int,
    *,
    noise_gain: float = 1.0,
    noise_enabled: bool = True,
) -> Rollout:
    """One rollout whose noise stream is keyed by (seed, sample_index)."""
    nominal, x0 = _check_inputs(dyn, nominal, x0)
    horizon = nominal.shape[0]
    if noise_enabled:
        noises = noise_blocks(seed, [sample_index], horizon, dyn.m)
    else:
        noises = np.zeros((1, horizon, dyn.m))
    states = propagate(dyn, nominal, x0, noises, noise_gain)
    return Rollout(states=states[0], noises=noises[0], seed=seed, sample_index=sample_index)
