"""
Counter-based noise streams.

Every (seed, sample_index) pair owns an independent Philox stream, so a
rollout's noise never depends on which worker generated it or in what order.
Step t of a rollout reads the t-th block of m standard normals of its stream.
"""
from __future__ import annotations

from collections.abc import Iterable

import numpy as np

# Spawn-key tag that separates the plant's actuation draws from inner batches ("act")
ACTUATION_TAG = 0x616374

_U64 = (1 << 64) - 1


def _stream(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & _U64, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def noise_block(seed: int, sample_index: int, horizon: int, m: int) -> np.ndarray:
    """Standard-normal draws delta_0..delta_{T-1} for one rollout, shape (T, m)."""
    return _stream(seed, sample_index).standard_normal((horizon, m))


def noise_blocks(seed: int, indices: Iterable[int], horizon: int, m: int) -> np.ndarray:
    """Stacked noise blocks for several sample indices, shape (len(indices), T, m)."""
    indices = list(indices)
    out = np.empty((len(indices), horizon, m))
    for row, idx in enumerate(indices):
        out[row] = noise_block(seed, idx, horizon, m)
    return out


def derive_seed(master_seed: int, *keys: int) -> int:
    """64-bit child seed for (master_seed, keys...), e.g. the inner batch seed of outer step k."""
    ss = np.random.SeedSequence(entropy=int(master_seed) & _U64, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def actuation_noise(master_seed: int, step: int, m: int) -> np.ndarray:
    """Fresh plant-side draw for outer step k, keyed (master_seed, k, "act")."""
    return _stream(master_seed, step, ACTUATION_TAG).standard_normal(m)
