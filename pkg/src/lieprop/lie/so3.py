"""Closed-form SO(3) maps in exponential coordinates.

All functions broadcast over leading axes: vectors are ``(..., 3)`` and
matrices ``(..., 3, 3)``. The basis is the usual one,

    E1 = [[0, 0, 0], [0, 0, -1], [0, 1, 0]]
    E2 = [[0, 0, 1], [0, 0, 0], [-1, 0, 0]]
    E3 = [[0, -1, 0], [1, 0, 0], [0, 0, 0]]

so ``hat(x) @ y == cross(x, y)`` and ``[ad(x)] == hat(x)``.

Small rotation angles (below ``SMALL_ANGLE``) use Taylor expansions of the
trigonometric coefficients, which are otherwise 0/0 at the origin.
"""

from __future__ import annotations

import math

import numpy as np

SMALL_ANGLE = 1e-4
PI_TOLERANCE = 1e-6
# above this angle the antisymmetric part of R is too small to recover the axis
_NEAR_PI = np.pi - 1e-2

BASIS = np.array(
    [
        [[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]],
        [[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
        [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
    ]
)


class AngleAtPi(ValueError):
    """Raised when a rotation angle is within tolerance of pi.

    The principal logarithm is ambiguous there, and picking a branch silently
    corrupts group statistics.
    """


class DomainError(ValueError):
    """Raised when exponential coordinates leave the principal ball."""


def hat(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape == (3,):
        a, b, c = x
        return np.array([[0.0, -c, b], [c, 0.0, -a], [-b, a, 0.0]])
    if x.shape[-1] != 3:
        raise ValueError(f"so(3) coordinates must have length 3, got {x.shape}")
    out = np.zeros(x.shape[:-1] + (3, 3))
    out[..., 0, 1] = -x[..., 2]
    out[..., 0, 2] = x[..., 1]
    out[..., 1, 0] = x[..., 2]
    out[..., 1, 2] = -x[..., 0]
    out[..., 2, 0] = -x[..., 1]
    out[..., 2, 1] = x[..., 0]
    return out


def vee(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[-2:] != (3, 3):
        raise ValueError(f"so(3) matrices must be 3x3, got {X.shape}")
    return np.stack([X[..., 2, 1], X[..., 0, 2], X[..., 1, 0]], axis=-1)


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross product over the last axis (cheaper than np.cross for tiny batches)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape == (3,) and b.shape == (3,):
        a0, a1, a2 = a.tolist()
        b0, b1, b2 = b.tolist()
        return np.array([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def _angle(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("...i,...i->...", x, x))


def _coefficients(theta: np.ndarray):
    """Return (sin t / t, (1 - cos t) / t^2, (t - sin t) / t^3) elementwise."""
    small = theta < SMALL_ANGLE
    t = np.where(small, 1.0, theta)
    t2 = theta * theta
    a = np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, np.sin(t) / t)
    half = np.sin(0.5 * t)
    b = np.where(small, 0.5 - t2 / 24.0 + t2 * t2 / 720.0, 2.0 * half * half / (t * t))
    c = np.where(small, 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0, (t - np.sin(t)) / (t**3))
    return a, b, c


def inverse_coefficient(theta: np.ndarray) -> np.ndarray:
    """Coefficient of X^2 in the inverse Jacobians: 1/t^2 - (1 + cos t)/(2 t sin t)."""
    small = theta < SMALL_ANGLE
    t = np.where(small, 1.0, theta)
    t2 = theta * theta
    exact = 1.0 / (t * t) - (1.0 + np.cos(t)) / (2.0 * t * np.sin(t))
    return np.where(small, 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0, exact)


def _inverse_coefficient_slope(theta: np.ndarray) -> np.ndarray:
    """d/dt of the inverse-Jacobian coefficient, divided by t."""
    small = theta < SMALL_ANGLE
    t = np.where(small, 1.0, theta)
    t2 = theta * theta
    half = 0.5 * t
    cot = np.cos(half) / np.sin(half)
    csc2 = 1.0 / np.sin(half) ** 2
    dq = -csc2 / (4.0 * t) - cot / (2.0 * t * t)
    exact = (-2.0 / t**3 - dq) / t
    return np.where(small, 1.0 / 360.0 + t2 / 7560.0, exact)


def exp(x: np.ndarray) -> np.ndarray:
    """Rodrigues formula, exact for any x (the map is surjective)."""
    x = np.asarray(x, dtype=float)
    if x.shape == (3,):
        return _exp_single(x)
    X = hat(x)
    a, b, _ = _coefficients(_angle(x))
    return np.eye(3) + a[..., None, None] * X + b[..., None, None] * (X @ X)


def _exp_single(x: np.ndarray) -> np.ndarray:
    t2 = float(x @ x)
    if t2 < SMALL_ANGLE * SMALL_ANGLE:
        a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0
        b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
    else:
        t = math.sqrt(t2)
        a = math.sin(t) / t
        half = math.sin(0.5 * t)
        b = 2.0 * half * half / t2
    X = hat(x)
    R = b * (X @ X)
    R += a * X
    R[0, 0] += 1.0
    R[1, 1] += 1.0
    R[2, 2] += 1.0
    return R


def log(R: np.ndarray) -> np.ndarray:
    """Principal logarithm; raises AngleAtPi when the angle is within 1e-6 of pi."""
    R = np.asarray(R, dtype=float)
    if R.shape[-2:] != (3, 3):
        raise ValueError(f"rotation matrices must be 3x3, got {R.shape}")
    lead = R.shape[:-2]
    R = R.reshape(-1, 3, 3)
    w = 0.5 * vee(R - np.swapaxes(R, -1, -2))
    s = _angle(w)
    c = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    theta = np.arctan2(s, c)
    if np.any(np.abs(theta - np.pi) < PI_TOLERANCE):
        raise AngleAtPi("rotation angle is within 1e-6 of pi; logarithm is ambiguous")
    small = theta < SMALL_ANGLE
    safe_s = np.where(small, 1.0, s)
    scale = np.where(small, 1.0 + theta * theta / 6.0, theta / safe_s)
    out = scale[:, None] * w
    near = theta > _NEAR_PI
    if np.any(near):
        out[near] = _log_near_pi(R[near], theta[near], w[near])
    return out.reshape(lead + (3,))


def _log_near_pi(R: np.ndarray, theta: np.ndarray, w: np.ndarray) -> np.ndarray:
    # (R + R^T)/2 - cos(t) I = (1 - cos t) a a^T; take the best-conditioned column
    sym = 0.5 * (R + np.swapaxes(R, -1, -2))
    cos_t = np.cos(theta)[..., None, None]
    outer = (sym - cos_t * np.eye(3)) / (1.0 - cos_t)
    diag = np.diagonal(outer, axis1=-2, axis2=-1)
    k = np.argmax(diag, axis=-1)
    col = np.take_along_axis(outer, k[..., None, None], axis=-1)[..., 0]
    axis = col / np.sqrt(np.take_along_axis(diag, k[..., None], axis=-1))
    sign = np.where(np.einsum("...i,...i->...", axis, w) < 0.0, -1.0, 1.0)
    return (sign * theta)[..., None] * axis


def jl(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    X = hat(x)
    _, b, c = _coefficients(_angle(x))
    return np.eye(3) + b[..., None, None] * X + c[..., None, None] * (X @ X)


def jr(x: np.ndarray) -> np.ndarray:
    return jl(-np.asarray(x, dtype=float))


def _check_domain(theta: np.ndarray) -> None:
    if np.any(theta >= np.pi):
        raise DomainError("inverse Jacobian requires |x| < pi")


def jl_inv(x: np.ndarray) -> np.ndarray:
    """Closed-form inverse left Jacobian, I - X/2 + c(|x|) X^2."""
    x = np.asarray(x, dtype=float)
    theta = _angle(x)
    _check_domain(theta)
    X = hat(x)
    c = inverse_coefficient(theta)
    return np.eye(3) - 0.5 * X + c[..., None, None] * (X @ X)


def jr_inv(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    theta = _angle(x)
    _check_domain(theta)
    X = hat(x)
    c = inverse_coefficient(theta)
    return np.eye(3) + 0.5 * X + c[..., None, None] * (X @ X)


def djl_inv_dx(x: np.ndarray) -> np.ndarray:
    """All partials of jl_inv; ``out[..., k, :, :]`` is d jl_inv / d x_k."""
    x = np.asarray(x, dtype=float)
    theta = _angle(x)
    _check_domain(theta)
    X = hat(x)
    X2 = X @ X
    c = inverse_coefficient(theta)[..., None, None, None]
    slope = _inverse_coefficient_slope(theta)[..., None, None, None]
    Ek = BASIS
    Xe = X[..., None, :, :]
    return (
        -0.5 * Ek
        + slope * x[..., :, None, None] * X2[..., None, :, :]
        + c * (Ek @ Xe + Xe @ Ek)
    )


def is_rotation(R: np.ndarray, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape[-2:] != (3, 3):
        return False
    err = np.swapaxes(R, -1, -2) @ R - np.eye(3)
    ortho = np.sqrt(np.einsum("...ij,...ij->...", err, err))
    return bool(np.all(ortho <= tol) and np.all(np.abs(np.linalg.det(R) - 1.0) <= tol))
