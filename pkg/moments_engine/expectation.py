"""
Closed-form expected costs under a Gaussian state belief.

Quadratic term: sum_i lambda_i (1 + mu_i^2) via noncentral chi-square means, with the
trace identity trace(QP) + d^T Q d as the singularity-free route and oracle.
Indicator term: conservative-set collision probability 1 - F_chi2_d(quadratic form).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc, gammaincc

from cost_engine.costs import CostSpec, check_positive_definite
from cost_engine.obstacles import closest_vertex
from dynamics_service.models import LtvModel
from errors import RejectedInputError
from moments_engine.propagation import BeliefTrajectory, GaussianBelief, propagate_moments

logger = logging.getLogger(__name__)

# Eigenvalues below this fraction of the largest magnitude are treated as zero
EIG_CLAMP_REL = 1e-12
# Projected covariance with smaller eigenvalues is handled as a point mass
SINGULAR_ABS = 1e-12


def _clamped_eigh(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lam, vecs = np.linalg.eigh(0.5 * (matrix + matrix.T))
    scale = float(np.max(np.abs(lam), initial=0.0))
    lam = np.where(np.abs(lam) < EIG_CLAMP_REL * scale, 0.0, lam)
    return lam, vecs


def noncentral_chi2_mean(K: int, ell: float) -> float:
    """Mean of chi2_K(ell): K + ell."""
    if int(K) != K or K < 1:
        raise RejectedInputError(f"degrees of freedom must be a positive integer, got {K}")
    if ell < 0 or math.isnan(ell):
        raise RejectedInputError(f"noncentrality must be nonnegative, got {ell}")
    return float(K) + float(ell)


def _check_chi2_args(d: int, q: float) -> None:
    if int(d) != d or d < 1:
        raise RejectedInputError(f"degrees of freedom must be a positive integer, got {d}")
    if q < 0 or math.isnan(q):
        raise RejectedInputError(f"chi-square argument must be nonnegative, got {q}")


def chi2_cdf(d: int, q: float) -> float:
    """F_{chi2_d}(q) = P(d/2, q/2), the regularized lower incomplete gamma."""
    _check_chi2_args(d, q)
    return float(gammainc(0.5 * d, 0.5 * q))


def chi2_sf(d: int, q: float) -> float:
    """Upper tail 1 - F_{chi2_d}(q), computed directly to keep far tails nonzero."""
    _check_chi2_args(d, q)
    return float(gammaincc(0.5 * d, 0.5 * q))


def _offset(belief: GaussianBelief, Q: np.ndarray, x_tgt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    Q = check_positive_definite(Q)
    x_tgt = np.asarray(x_tgt, dtype=float)
    if Q.shape[0] != belief.dim or x_tgt.shape != (belief.dim,):
        raise RejectedInputError(
            f"dimension mismatch: belief {belief.dim}, Q {Q.shape}, x_tgt {x_tgt.shape}"
        )
    return Q, belief.mean - x_tgt


def quadratic_cost_trace_identity(belief: GaussianBelief, Q: np.ndarray, x_tgt: np.ndarray) -> float:
    """E[(X - x_tgt)^T Q (X - x_tgt)] = trace(Q P) + d^T Q d."""
    Q, d = _offset(belief, Q, x_tgt)
    return max(0.0, float(np.trace(Q @ belief.cov) + d @ Q @ d))


def expected_quadratic_cost(belief: GaussianBelief, Q: np.ndarray, x_tgt: np.ndarray) -> float:
    """
    Expected quadratic cost as a weighted sum of noncentral chi-square means.

    With V^T V = Q, the whitened offset Z = V (X - x_tgt) has covariance V P V^T = U diag(lambda) U^T,
    and the cost splits into independent lambda_i * chi2_1(mu_i^2) terms,
    mu = diag(lambda)^{-1/2} U^T V d. A singular V P V^T has no such split, so the trace
    identity is used instead.
    """
    Q, d = _offset(belief, Q, x_tgt)
    V = np.linalg.cholesky(Q).T
    lam, U = _clamped_eigh(V @ belief.cov @ V.T)
    if np.any(lam <= 0.0):
        return quadratic_cost_trace_identity(belief, Q, x_tgt)
    mu = (U.T @ (V @ d)) / np.sqrt(lam)
    return float(sum(l * noncentral_chi2_mean(1, m * m) for l, m in zip(lam, mu)))


def collision_probability(
    belief: GaussianBelief,
    c_star: np.ndarray,
    projection: tuple[int, ...],
) -> float:
    """
    P{X in C}: C is everything at least as far (in the P-shaped metric) from the mean as c*.
    A singular projected covariance is treated as a point mass at the mean.
    """
    marginal = belief.marginal(projection)
    c_star = np.asarray(c_star, dtype=float)
    if c_star.shape != (marginal.dim,):
        raise RejectedInputError(f"c_star must have shape ({marginal.dim},), got {c_star.shape}")
    diff = c_star - marginal.mean
    lam, U = _clamped_eigh(marginal.cov)
    if lam[0] <= SINGULAR_ABS:
        return 1.0 if np.allclose(diff, 0.0, rtol=0.0, atol=SINGULAR_ABS) else 0.0
    quad_form = float(np.sum((U.T @ diff) ** 2 / lam))
    return chi2_sf(marginal.dim, quad_form)


@dataclass(frozen=True, eq=False)
class ExpectedCostBreakdown:
    quadratic: np.ndarray  # (T,) expected running quadratic cost per step, before dt
    indicator: np.ndarray  # (T,) omega_C * summed collision probabilities per step, before dt
    terminal: float
    dt: float

    @property
    def running(self) -> float:
        return float(np.sum(self.quadratic + self.indicator) * self.dt)

    @property
    def total(self) -> float:
        return self.running + self.terminal


def expected_cost_breakdown(
    model: LtvModel,
    cost: CostSpec,
    nominal: np.ndarray,
    x0: np.ndarray,
    noise_gain: float = 1.0,
    beliefs: BeliefTrajectory | None = None,
) -> ExpectedCostBreakdown:
    if beliefs is None:
        beliefs = propagate_moments(model, nominal, x0, noise_gain)
    use_indicator = cost.analytic_indicator and cost.omega_c > 0 and bool(cost.obstacles)
    horizon = beliefs.horizon
    quadratic = np.empty(horizon)
    indicator = np.zeros(horizon)
    for t in range(horizon):
        belief = beliefs[t]
        quadratic[t] = expected_quadratic_cost(belief, cost.Q, cost.x_tgt)
        if use_indicator:
            for obs in cost.obstacles:
                idx = list(obs.projection)
                c_star = closest_vertex(obs, belief.mean[idx])
                indicator[t] += cost.omega_c * collision_probability(belief, c_star, obs.projection)
    terminal = expected_quadratic_cost(beliefs[horizon], cost.Q_T, cost.x_tgt)
    return ExpectedCostBreakdown(quadratic=quadratic, indicator=indicator, terminal=terminal, dt=cost.dt)


def expected_total_cost(
    model: LtvModel,
    cost: CostSpec,
    nominal: np.ndarray,
    x0: np.ndarray,
    noise_gain: float = 1.0,
) -> float:
    """E[S] = sum_t (E[quadratic] + omega_C P{collision}) dt + E[terminal]."""
    return expected_cost_breakdown(model, cost, nominal, x0, noise_gain).total
