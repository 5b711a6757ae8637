"""
Gaussian moment propagation through LTV dynamics.
x_{t+1} = A_t x_t + B_t u_t,  P_{t+1} = A_t P_t A_t^T + g^2 B_t B_t^T,  P_0 = 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dynamics_service.models import LtvModel
from errors import RejectedInputError

SYMMETRY_TOL = 1e-9
PSD_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        n = mean.shape[0] if mean.ndim == 1 else -1
        if mean.ndim != 1 or cov.shape != (n, n):
            raise RejectedInputError(f"belief mean {mean.shape} and cov {cov.shape} disagree")
        if np.max(np.abs(cov - cov.T), initial=0.0) > SYMMETRY_TOL:
            raise RejectedInputError("belief covariance is not symmetric")
        if n:
            eig = np.linalg.eigvalsh(cov)
            if eig[0] < -PSD_TOL * max(1.0, abs(eig[-1])):
                raise RejectedInputError("belief covariance is not positive semi-definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def marginal(self, projection: tuple[int, ...]) -> "GaussianBelief":
        """Coordinate projection; exact for Gaussians."""
        idx = np.asarray(projection, dtype=int)
        if idx.size == 0 or idx.min() < 0 or idx.max() >= self.dim:
            raise RejectedInputError(f"projection {projection} invalid for dimension {self.dim}")
        return GaussianBelief(self.mean[idx], self.cov[np.ix_(idx, idx)])


@dataclass(frozen=True, eq=False)
class BeliefTrajectory:
    beliefs: tuple[GaussianBelief, ...]

    def __post_init__(self) -> None:
        if not self.beliefs:
            raise RejectedInputError("belief trajectory is empty")
        if np.any(self.beliefs[0].cov != 0.0):
            raise RejectedInputError("initial covariance must be the zero matrix")

    @property
    def horizon(self) -> int:
        return len(self.beliefs) - 1

    def __len__(self) -> int:
        return len(self.beliefs)

    def __getitem__(self, t: int) -> GaussianBelief:
        return self.beliefs[t]

    def means(self) -> np.ndarray:
        return np.stack([b.mean for b in self.beliefs])

    def covariances(self) -> np.ndarray:
        return np.stack([b.cov for b in self.beliefs])


def propagate_moments(
    model: LtvModel,
    nominal: np.ndarray,
    x0: np.ndarray,
    noise_gain: float = 1.0,
) -> BeliefTrajectory:
    """Exact mean/covariance recursion of the LTV system driven by nominal + N(0, I) input noise."""
    nominal = np.asarray(nominal, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if nominal.shape != (model.horizon, model.m):
        raise RejectedInputError(f"nominal must have shape ({model.horizon}, {model.m}), got {nominal.shape}")
    if x0.shape != (model.n,):
        raise RejectedInputError(f"x0 must have shape ({model.n},), got {x0.shape}")

    mean = x0.copy()
    cov = np.zeros((model.n, model.n))
    beliefs = [GaussianBelief(mean, cov)]
    gain2 = noise_gain * noise_gain
    for t in range(model.horizon):
        A, B = model.A[t], model.B[t]
        mean = A @ mean + B @ nominal[t]
        cov = A @ cov @ A.T + gain2 * (B @ B.T)
        cov = 0.5 * (cov + cov.T)
        beliefs.append(GaussianBelief(mean, cov))
    return BeliefTrajectory(tuple(beliefs))
