"""
Concentration-coverage protocol.

Draw many independent batches of the sizes the Hoeffding and Chebyshev bounds
prescribe and count how often the estimates miss a large-batch reference by
at least eps. A sound bound keeps the miss frequency near or below rho.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from complexity_engine.bounds import (
    ComplexityQuery,
    HoeffdingForm,
    chebyshev_samples_empirical,
    hoeffding_samples,
)
from cost_engine.costs import CostSpec
from dynamics_service.models import DynamicsFn
from dynamics_service.streams import derive_seed
from errors import RejectedInputError
from mppi_engine.estimator import (
    PiConfig,
    build_batch,
    empirical_weight_mean,
    empirical_weighted_noise,
)

logger = logging.getLogger(__name__)

# Slack on top of rho allowed by the statistical check
COVERAGE_TOLERANCE = 0.02

# Spawn keys for the reference and pilot batches; repetitions use keys 0..M-1
_REFERENCE_KEY = 1 << 32
_PILOT_KEY = (1 << 32) + 1


@dataclass(frozen=True)
class CoverageResult:
    bound: str  # "hoeffding" or "chebyshev"
    num_samples: int
    repetitions: int
    failures: int  # worst component for the vector-valued estimate
    permitted: float
    tolerance: float = COVERAGE_TOLERANCE

    @property
    def observed(self) -> float:
        return self.failures / self.repetitions

    @property
    def passed(self) -> bool:
        return self.observed <= self.permitted + self.tolerance


@dataclass(frozen=True)
class CoverageReference:
    e_w: float
    e2: np.ndarray  # (m,) at step 0
    e1_pilot: float


def coverage_reference(
    dyn: DynamicsFn,
    spec: CostSpec,
    cfg: PiConfig,
    x0: np.ndarray,
    reference_samples: int,
    pilot_samples: int,
) -> CoverageReference:
    """Large-batch E[w] and E2, and the pilot E1 that sizes the Chebyshev batches."""
    reference = build_batch(
        dyn, spec, replace(cfg, num_samples=reference_samples, seed=derive_seed(cfg.seed, _REFERENCE_KEY)), x0
    )
    e_w = empirical_weight_mean(reference)
    if not e_w > 0:
        raise RejectedInputError("reference weight mean underflows; raise lambda")
    e2 = empirical_weighted_noise(reference, 0, e_w_ref=e_w)
    pilot = build_batch(dyn, spec, replace(cfg, num_samples=pilot_samples, seed=derive_seed(cfg.seed, _PILOT_KEY)), x0)
    return CoverageReference(e_w=e_w, e2=e2, e1_pilot=empirical_weight_mean(pilot))


def run_coverage(
    dyn: DynamicsFn,
    spec: CostSpec,
    cfg: PiConfig,
    x0: np.ndarray,
    query: ComplexityQuery,
    *,
    repetitions: int = 1000,
    reference_samples: int = 200_000,
    pilot_samples: int = 20_000,
    sample_scale: float = 1.0,
    form: HoeffdingForm | str = HoeffdingForm.EQ9,
) -> tuple[CoverageResult, CoverageResult]:
    """
    Returns (hoeffding, chebyshev) results. Each repetition draws one batch of
    max(N1, N2) samples from its own seed and scores its first N1 and N2 samples.
    """
    if repetitions < 1:
        raise RejectedInputError(f"repetitions must be >= 1, got {repetitions}")
    if not sample_scale > 0:
        raise RejectedInputError(f"sample_scale must be positive, got {sample_scale}")
    ref = coverage_reference(dyn, spec, cfg, x0, reference_samples, pilot_samples)
    n1 = max(1, round(hoeffding_samples(query.eps1, query.rho1, form) * sample_scale))
    n2_count = chebyshev_samples_empirical(ref.e1_pilot, query.eps1, query.eps2, query.rho2)
    if n2_count.count is None:
        raise RejectedInputError("Chebyshev sample count overflows for this testbed")
    n2 = max(1, round(n2_count.count * sample_scale))
    logger.info(
        "Coverage: E[w]=%.6g, pilot E1=%.6g, N1=%d, N2=%d, %d repetitions",
        ref.e_w,
        ref.e1_pilot,
        n1,
        n2,
        repetitions,
    )

    hoeffding_failures = 0
    chebyshev_failures = np.zeros(cfg.m, dtype=int)
    size = max(n1, n2)
    for rep in range(repetitions):
        batch = build_batch(dyn, spec, replace(cfg, num_samples=size, seed=derive_seed(cfg.seed, rep)), x0)
        e1 = empirical_weight_mean(batch.head(n1))
        if abs(e1 - ref.e_w) >= query.eps1:
            hoeffding_failures += 1
        e2 = empirical_weighted_noise(batch.head(n2), 0, e_w_ref=ref.e_w)
        chebyshev_failures += np.abs(e2 - ref.e2) >= query.eps2

    return (
        CoverageResult("hoeffding", n1, repetitions, hoeffding_failures, query.rho1),
        CoverageResult("chebyshev", n2, repetitions, int(chebyshev_failures.max()), query.rho2),
    )
