"""Group-theoretic sample statistics and conversions between conventions.

Handedness follows the side on which the mean is removed:

* ``"left"``:  x = log(mu^-1 g),  i.e. g = mu exp(x)
* ``"right"``: x = log(g mu^-1),  i.e. g = exp(x) mu

Covariances on SO(3) x R^3 are ordered rotation block first, momentum second.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from lieprop.lie import SO3xR3, so3
from lieprop.lie.groups import MatrixLieGroup, ProductPoint

HANDEDNESS = ("left", "right")
MEAN_TOLERANCE = 1e-6
MAX_MEAN_ITERATIONS = 100

_PRODUCT = SO3xR3()


class NonConvergence(RuntimeError):
    """The iterative group mean did not reach its tolerance."""


class HandednessMismatch(ValueError):
    pass


def _check_side(side: str) -> None:
    if side not in HANDEDNESS:
        raise ValueError(f"handedness must be 'left' or 'right', got {side!r}")


@dataclass
class GaussianState:
    """Concentrated Gaussian (mu, sigma) with its handedness tag."""

    mu: Any
    sigma: np.ndarray
    handedness: str = "left"

    def __post_init__(self) -> None:
        _check_side(self.handedness)
        self.sigma = np.asarray(self.sigma, dtype=float)


@dataclass
class EnsembleStats:
    """Per-checkpoint Monte-Carlo statistics on SO(3) x R^3."""

    times: np.ndarray
    mean_R: np.ndarray  # (K, 3, 3)
    mean_l: np.ndarray  # (K, 3)
    cov: np.ndarray  # (K, 6, 6)
    n: int
    handedness: str = "left"

    def __len__(self) -> int:
        return len(self.times)

    def at(self, k: int) -> GaussianState:
        mu = ProductPoint(self.mean_R[k].copy(), self.mean_l[k].copy())
        return GaussianState(mu, self.cov[k].copy(), self.handedness)


def sample_mean_rotation(
    R: np.ndarray,
    side: str = "left",
    tol: float = MEAN_TOLERANCE,
    max_iter: int = MAX_MEAN_ITERATIONS,
) -> np.ndarray:
    """Iterative group mean of rotations ``R`` with shape (n, 3, 3).

    Starts from exp(mean log R_i) and applies the fixed-point update until the
    mean residual log has norm below ``tol``.
    """
    _check_side(side)
    R = np.asarray(R, dtype=float)
    if R.ndim == 2:
        R = R[None]
    mean = so3.exp(so3.log(R).mean(axis=0))
    for _ in range(max_iter + 1):
        if side == "left":
            resid = so3.log(mean.T @ R).mean(axis=0)
        else:
            resid = so3.log(R @ mean.T).mean(axis=0)
        if np.linalg.norm(resid) < tol:
            return mean
        step = so3.exp(resid)
        mean = mean @ step if side == "left" else step @ mean
    raise NonConvergence(f"group mean did not converge within {max_iter} iterations")


def centered_coordinates(R: np.ndarray, l: np.ndarray, mean_R: np.ndarray, mean_l: np.ndarray, side: str = "left") -> np.ndarray:
    """Rows [log(rotation residual), l - mean_l] for each sample."""
    _check_side(side)
    if side == "left":
        rot = so3.log(mean_R.T @ R)
    else:
        rot = so3.log(R @ mean_R.T)
    return np.concatenate([rot, np.asarray(l, dtype=float) - mean_l], axis=-1)


def sample_covariance(R: np.ndarray, l: np.ndarray, mean_R: np.ndarray, mean_l: np.ndarray, side: str = "left") -> np.ndarray:
    """(1/n) sum x_i x_i^T with rotation-first sample vectors."""
    x = centered_coordinates(R, l, mean_R, mean_l, side)
    cov = x.T @ x / x.shape[0]
    return 0.5 * (cov + cov.T)


def product_statistics(R: np.ndarray, l: np.ndarray, side: str = "left") -> GaussianState:
    """Mean and covariance of an SO(3) x R^3 sample set."""
    mean_R = sample_mean_rotation(R, side)
    mean_l = np.asarray(l, dtype=float).mean(axis=0)
    cov = sample_covariance(R, l, mean_R, mean_l, side)
    return GaussianState(ProductPoint(mean_R, mean_l), cov, side)


def convert_left_right(state: GaussianState, group: MatrixLieGroup = _PRODUCT) -> GaussianState:
    """Re-express the same distribution with the opposite handedness.

    The mean element is shared; the covariance maps through Ad(mu) (or its
    inverse), which is exact because log(g mu^-1) = Ad(mu) log(mu^-1 g).
    """
    Ad = group.Ad(state.mu)
    if state.handedness == "left":
        sigma = Ad @ state.sigma @ Ad.T
        side = "right"
    else:
        Ad_inv = np.linalg.inv(Ad)
        sigma = Ad_inv @ state.sigma @ Ad_inv.T
        side = "left"
    return GaussianState(state.mu, 0.5 * (sigma + sigma.T), side)


def invert_state(state: GaussianState, group: MatrixLieGroup = _PRODUCT) -> GaussianState:
    """Statistics of {g^-1}: mean inverted, covariance kept, handedness flipped.

    If g = exp(x) mu then g^-1 = mu^-1 exp(-x), so the right statistics of g
    are the left statistics of g^-1 with the same covariance.
    """
    side = "right" if state.handedness == "left" else "left"
    return GaussianState(group.inverse(state.mu), state.sigma.copy(), side)


def error_metrics(reference: GaussianState, propagated: GaussianState) -> tuple[float, float, float]:
    """(e_R, e_l, e_Sigma): Frobenius rotation error, momentum 2-norm, covariance Frobenius."""
    if reference.handedness != propagated.handedness:
        raise HandednessMismatch(
            f"reference is {reference.handedness}, propagated is {propagated.handedness}"
        )
    e_R = float(np.linalg.norm(reference.mu.rotation - propagated.mu.rotation))
    e_l = float(np.linalg.norm(reference.mu.momentum - propagated.mu.momentum))
    e_S = float(np.linalg.norm(reference.sigma - propagated.sigma))
    return e_R, e_l, e_S


def stats_from_checkpoints(times: np.ndarray, R: np.ndarray, l: np.ndarray, side: str = "left") -> EnsembleStats:
    """Build EnsembleStats from checkpoint-major arrays R (K, n, 3, 3), l (K, n, 3)."""
    K, n = R.shape[:2]
    mean_R = np.empty((K, 3, 3))
    mean_l = np.empty((K, 3))
    cov = np.empty((K, 6, 6))
    for k in range(K):
        st = product_statistics(R[k], l[k], side)
        mean_R[k], mean_l[k], cov[k] = st.mu.rotation, st.mu.momentum, st.sigma
    return EnsembleStats(np.asarray(times, dtype=float), mean_R, mean_l, cov, n, side)


__all__ = [
    "EnsembleStats",
    "GaussianState",
    "HandednessMismatch",
    "NonConvergence",
    "centered_coordinates",
    "convert_left_right",
    "error_metrics",
    "invert_state",
    "product_statistics",
    "sample_covariance",
    "sample_mean_rotation",
    "stats_from_checkpoints",
]
