"""
Variance sweep over stability parameter and horizon.
Every cell samples from the initial state with the same seed, so cells share their noise.
"""
from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, replace

import numpy as np

from complexity_engine.bounds import CappedValue, variance_upper_bound
from dynamics_service.models import LtvModel, make_double_integrator
from moments_engine.expectation import expected_total_cost
from mppi_engine.estimator import (
    build_batch,
    empirical_variance_stderr,
    empirical_variance_weighted_control,
    inverse_weight_mean,
)
from simulation_engine.runner import MpcRunConfig

logger = logging.getLogger(__name__)

# Standard errors of slack when comparing against the analytic variance bound
BOUND_SLACK_STDERR = 4.0


@dataclass(frozen=True)
class SweepRow:
    a: float
    horizon: int
    variance: float  # averaged over control components
    variance_stderr: float
    inv_mean_weight: CappedValue
    e_s: float
    variance_bound: CappedValue

    @property
    def bound_ok(self) -> bool:
        if self.variance_bound.overflow:
            return True
        return self.variance <= self.variance_bound.value + BOUND_SLACK_STDERR * self.variance_stderr


def variance_sweep(
    base: MpcRunConfig,
    a_values: Sequence[float],
    horizons: Sequence[int],
    model_factory: Callable[[float, int], LtvModel] = make_double_integrator,
) -> list[SweepRow]:
    """One row per (a, T), in the order given."""
    rows: list[SweepRow] = []
    m = base.dyn.m
    for a in a_values:
        for horizon in horizons:
            dyn = model_factory(a, horizon)
            inner = replace(base.inner, horizon=horizon, nominal=np.zeros((horizon, m)))
            batch = build_batch(dyn, base.spec, inner, base.x0)
            e_s = expected_total_cost(dyn, base.spec, inner.nominal, base.x0, inner.noise_gain)
            row = SweepRow(
                a=float(a),
                horizon=int(horizon),
                variance=float(np.mean(empirical_variance_weighted_control(batch, 0))),
                variance_stderr=float(np.mean(empirical_variance_stderr(batch, 0))),
                inv_mean_weight=inverse_weight_mean(batch),
                e_s=e_s,
                variance_bound=variance_upper_bound(e_s / base.spec.lam),
            )
            logger.info("Sweep a=%g T=%d: variance %.6g, 1/E1 %s", a, horizon, row.variance, row.inv_mean_weight)
            rows.append(row)
    return rows
