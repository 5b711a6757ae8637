"""
Sample-count and error-bound calculator.

Hoeffding bound for the weight mean E1, Chebyshev bound for the weighted noise E2,
the variance bounds behind it, and the covariance / expected-cost growth bounds
for linear models. Counts that would exceed 10^LOG10_CAP are reported as overflow.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Literal

import numpy as np

from errors import AssumptionViolationError, InternalInvariantError, RejectedInputError

logger = logging.getLogger(__name__)

LOG10_CAP = 300.0
CHEBYSHEV_CONSTANT = 1.0 + math.sqrt(2.0)
LN10 = math.log(10.0)
# Absolute slack when rounding up, so 1.0000000000000002 counts as 1
_CEIL_ATOL = 1e-9
# Relative slack for the verified growth curve
_GROWTH_RTOL = 1e-9


class HoeffdingForm(str, Enum):
    # 2 exp(-2 N eps^2) <= rho (default)
    EQ9 = "eq9"
    # 2 exp(-N eps^2) <= rho
    PROP1 = "prop1"


@dataclass(frozen=True)
class CappedValue:
    """A positive magnitude kept as log10; above the cap it is reported as overflow."""

    log10: float
    cap: float = LOG10_CAP

    @classmethod
    def from_log(cls, ln_value: float, cap: float = LOG10_CAP) -> "CappedValue":
        return cls(ln_value / LN10, cap)

    @classmethod
    def from_value(cls, value: float, cap: float = LOG10_CAP) -> "CappedValue":
        if not value > 0:
            raise RejectedInputError(f"capped values must be positive, got {value}")
        return cls(math.log10(value), cap)

    @property
    def overflow(self) -> bool:
        return self.log10 > self.cap

    @property
    def value(self) -> float | None:
        return None if self.overflow else 10.0**self.log10

    def __str__(self) -> str:
        return "overflow" if self.overflow else repr(self.value)


@dataclass(frozen=True)
class SampleCount:
    """Required sample count; count is None when the count overflows."""

    count: int | None
    log10: float

    @property
    def overflow(self) -> bool:
        return self.count is None

    def __str__(self) -> str:
        return "overflow" if self.count is None else str(self.count)


def _ceil_count(x: float) -> int:
    n = math.ceil(x)
    if n - x > 1.0 - _CEIL_ATOL:
        n -= 1
    return max(1, n)


def _count_from_log(ln_count: float, cap: float) -> SampleCount:
    log10 = ln_count / LN10
    if log10 > cap:
        return SampleCount(count=None, log10=log10)
    return SampleCount(count=_ceil_count(math.exp(ln_count)), log10=log10)


def _check_positive(**values: float) -> None:
    for name, value in values.items():
        if not value > 0:
            raise RejectedInputError(f"{name} must be positive, got {value}")


def _check_risk(name: str, rho: float) -> None:
    if not 0 < rho < 1:
        raise RejectedInputError(f"{name} must lie in (0, 1), got {rho}")


@dataclass(frozen=True)
class ComplexityQuery:
    eps1: float
    eps2: float
    rho1: float
    rho2: float
    lam: float

    def __post_init__(self) -> None:
        _check_positive(eps1=self.eps1, eps2=self.eps2, lam=self.lam)
        _check_risk("rho1", self.rho1)
        _check_risk("rho2", self.rho2)


@dataclass(frozen=True)
class ComplexityReport:
    n1: int
    n2: SampleCount | None  # None when E1 <= eps1 on the empirical route
    multiplier: CappedValue  # eps1 / E[w], or eps1 / E1
    mode: Literal["analytic", "empirical"]
    assumption_ok: bool
    e_s: float | None = None
    e1_hat: float | None = None

    @property
    def overflow(self) -> bool:
        return self.n2 is not None and self.n2.overflow

    @property
    def required(self) -> SampleCount | None:
        """max(N1, N2)."""
        if self.n2 is None or self.n2.overflow:
            return self.n2
        count = max(self.n1, self.n2.count or 0)
        return SampleCount(count=count, log10=math.log10(count))


def hoeffding_samples(eps1: float, rho1: float, form: HoeffdingForm | str = HoeffdingForm.EQ9) -> int:
    """Smallest N with 2 exp(-c N eps1^2) <= rho1 (c = 2 for eq9, 1 for prop1)."""
    _check_positive(eps1=eps1, rho1=rho1)
    if rho1 >= 2.0:
        logger.info("rho1=%g >= 2 makes the Hoeffding bound vacuous; N1 = 1", rho1)
        return 1
    rate = 2.0 if HoeffdingForm(form) is HoeffdingForm.EQ9 else 1.0
    return _ceil_count(math.log(2.0 / rho1) / (rate * eps1 * eps1))


def chebyshev_samples_analytic(
    log_e_s_scaled: float,
    eps2: float,
    rho2: float,
    cap: float = LOG10_CAP,
) -> SampleCount:
    """N2 = ceil((1 + sqrt 2) exp(2 E[S]/lambda) / (rho2 eps2^2)), evaluated in log domain."""
    if not log_e_s_scaled >= 0:
        raise RejectedInputError(f"E[S]/lambda must be nonnegative, got {log_e_s_scaled}")
    _check_positive(eps2=eps2, rho2=rho2)
    ln_count = math.log(CHEBYSHEV_CONSTANT) + 2.0 * log_e_s_scaled - math.log(rho2) - 2.0 * math.log(eps2)
    return _count_from_log(ln_count, cap)


def chebyshev_samples_empirical(
    e1_hat: float,
    eps1: float,
    eps2: float,
    rho2: float,
    cap: float = LOG10_CAP,
) -> SampleCount:
    """N2 = ceil((1 + sqrt 2) / (rho2 eps2^2 (E1 - eps1)^2)); needs E1 > eps1."""
    _check_positive(eps1=eps1, eps2=eps2, rho2=rho2)
    gap = e1_hat - eps1
    if not gap > 0:
        raise AssumptionViolationError(f"E1={e1_hat:.6g} does not exceed eps1={eps1:g}")
    ln_count = math.log(CHEBYSHEV_CONSTANT) - math.log(rho2) - 2.0 * math.log(eps2) - 2.0 * math.log(gap)
    return _count_from_log(ln_count, cap)


def control_error_bounds(u_star_i: float, eps1: float, eps2: float, e_w: float) -> tuple[float, float]:
    """
    Interval holding the estimate when E1 and E2 meet their error bounds:
    [1 - eps1/e_w, 1 + eps1/e_w] times [u* - eps2, u* + eps2], taken over all four corners.
    """
    if eps1 < 0 or eps2 < 0:
        raise RejectedInputError(f"error bounds must be nonnegative, got eps1={eps1}, eps2={eps2}")
    if not eps1 < e_w:
        raise AssumptionViolationError(f"eps1={eps1:g} is not below E[w]={e_w:.6g}")
    ratio = eps1 / e_w
    corners = [m * a for m in (1.0 - ratio, 1.0 + ratio) for a in (u_star_i - eps2, u_star_i + eps2)]
    return min(corners), max(corners)


def var_w_bound(e_w: float) -> float:
    """Variance bound (1 - E[w]) E[w] for a weight supported on [0, 1]."""
    if not 0 < e_w <= 1:
        raise RejectedInputError(f"E[w] must lie in (0, 1], got {e_w}")
    return (1.0 - e_w) * e_w


def variance_upper_bound(log_e_s_scaled: float, cap: float = LOG10_CAP) -> CappedValue:
    """(1 + sqrt 2) exp(2 E[S]/lambda) bounds Var(w delta) / E[w]^2."""
    if not log_e_s_scaled >= 0:
        raise RejectedInputError(f"E[S]/lambda must be nonnegative, got {log_e_s_scaled}")
    return CappedValue.from_log(math.log(CHEBYSHEV_CONSTANT) + 2.0 * log_e_s_scaled, cap)


def var_product_bound(var_x2: float, var_y2: float, e_x2: float, e_y2: float) -> float:
    """Var(X^2 Y^2) <= sqrt(Var(X^2) Var(Y^2)) + E(X^2) E(Y^2)."""
    if min(var_x2, var_y2, e_x2, e_y2) < 0:
        raise RejectedInputError("variance product bound needs nonnegative inputs")
    return math.sqrt(var_x2 * var_y2) + e_x2 * e_y2


def _sigma_min_squared(M: np.ndarray) -> float:
    if M.shape[1] < M.shape[0]:
        return 0.0
    return max(0.0, float(np.linalg.eigvalsh(M @ M.T)[0]))


def covariance_growth_lower_bound(model, t: int, noise_gain: float = 1.0) -> float:
    """
    Lower bound on ||P_t||_2 from the covariance recursion:
    s(B_{t-1}) + sum_{tau<t-1} s(A_{t-1} ... A_{tau+1}) s(B_tau), s = squared smallest singular value.
    """
    if not 1 <= t <= model.horizon:
        raise RejectedInputError(f"t must lie in [1, {model.horizon}], got {t}")
    total = _sigma_min_squared(model.B[t - 1])
    product = np.eye(model.n)
    for tau in range(t - 2, -1, -1):
        product = product @ model.A[tau + 1]
        total += _sigma_min_squared(product) * _sigma_min_squared(model.B[tau])
    return noise_gain * noise_gain * total


def min_expected_cost_bound(Q: np.ndarray, P: np.ndarray) -> float:
    """lambda_min(Q) lambda_min(P) <= E[(X - x_tgt)^T Q (X - x_tgt)] for any mean."""
    Q = np.asarray(Q, dtype=float)
    P = np.asarray(P, dtype=float)
    q_min = float(np.linalg.eigvalsh(Q)[0])
    if q_min <= 0:
        raise RejectedInputError("Q is not positive definite")
    return q_min * max(0.0, float(np.linalg.eigvalsh(0.5 * (P + P.T))[0]))


def dominant_eigenvalue_modulus(A: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.asarray(A, dtype=float)))))


def growth_constant(A: np.ndarray, B: np.ndarray, Q: np.ndarray) -> float:
    """sigma = lambda_min(Q) lambda_min(B B^T) / |lambda_1(A)|^2."""
    B = np.asarray(B, dtype=float)
    lam1 = dominant_eigenvalue_modulus(A)
    q_min = float(np.linalg.eigvalsh(np.asarray(Q, dtype=float))[0])
    bb_min = float(np.linalg.eigvalsh(B @ B.T)[0])
    return q_min * bb_min / (lam1 * lam1)


def unstable_growth_curve(A: np.ndarray, B: np.ndarray, Q: np.ndarray, t_max: int) -> np.ndarray:
    """
    sigma |lambda_1|^{2t} for t = 1..t_max, a lower bound on the expected quadratic cost of
    an unstable LTI system started from a point mass. Each value is checked against
    lambda_min(Q) ||P_t||_2 before it is returned.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or B.shape != (n, n) or Q.shape != (n, n):
        raise RejectedInputError(f"A {A.shape}, B {B.shape} and Q {Q.shape} must be square of one size")
    if t_max < 1:
        raise RejectedInputError(f"t_max must be >= 1, got {t_max}")
    if np.linalg.matrix_rank(B) < n:
        raise RejectedInputError("B must have full rank")
    q_min = float(np.linalg.eigvalsh(Q)[0])
    if q_min <= 0:
        raise RejectedInputError("Q is not positive definite")
    lam1 = dominant_eigenvalue_modulus(A)
    if not lam1 > 1.0:
        raise AssumptionViolationError(f"dominant eigenvalue modulus {lam1:.6g} is not above 1")

    sigma = growth_constant(A, B, Q)
    steps = np.arange(1, t_max + 1)
    curve = sigma * lam1 ** (2.0 * steps)

    P = np.zeros((n, n))
    BBt = B @ B.T
    for t in steps:
        P = A @ P @ A.T + BBt
        reference = q_min * float(np.linalg.norm(P, 2))
        if curve[t - 1] > reference * (1.0 + _GROWTH_RTOL):
            raise InternalInvariantError(
                f"growth bound {curve[t - 1]:.6g} exceeds lambda_min(Q)||P_t|| = {reference:.6g} at t={t}"
            )
    return curve


def analytic_report(
    query: ComplexityQuery,
    e_s: float,
    form: HoeffdingForm | str = HoeffdingForm.EQ9,
    cap: float = LOG10_CAP,
) -> ComplexityReport:
    """
    Analytic route: N2 from E[S]. E[w] is replaced by its Jensen lower bound exp(-E[S]/lambda),
    which makes the multiplier an upper bound.
    """
    scaled = e_s / query.lam
    multiplier = CappedValue.from_log(math.log(query.eps1) + scaled, cap)
    assumption_ok = -scaled > math.log(query.eps1)
    if not assumption_ok:
        logger.warning("exp(-E[S]/lambda) = exp(-%.6g) is not above eps1=%g", scaled, query.eps1)
    return ComplexityReport(
        n1=hoeffding_samples(query.eps1, query.rho1, form),
        n2=chebyshev_samples_analytic(scaled, query.eps2, query.rho2, cap),
        multiplier=multiplier,
        mode="analytic",
        assumption_ok=assumption_ok,
        e_s=e_s,
    )


def empirical_report(
    query: ComplexityQuery,
    e1_hat: float,
    form: HoeffdingForm | str = HoeffdingForm.EQ9,
    cap: float = LOG10_CAP,
) -> ComplexityReport:
    """Empirical route: N2 from a pilot batch's E1; E1 <= eps1 flags the row."""
    n1 = hoeffding_samples(query.eps1, query.rho1, form)
    try:
        n2 = chebyshev_samples_empirical(e1_hat, query.eps1, query.eps2, query.rho2, cap)
        assumption_ok = True
    except AssumptionViolationError as e:
        logger.warning("Empirical N2 unavailable: %s", e)
        n2 = None
        assumption_ok = False
    multiplier = (
        CappedValue.from_value(query.eps1 / e1_hat, cap) if e1_hat > 0 else CappedValue(math.inf, cap)
    )
    return ComplexityReport(
        n1=n1,
        n2=n2,
        multiplier=multiplier,
        mode="empirical",
        assumption_ok=assumption_ok,
        e1_hat=e1_hat,
    )
