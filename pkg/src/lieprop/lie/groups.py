"""Matrix Lie groups used by the propagators.

Three groups are provided, each an instance of :class:`MatrixLieGroup`:

* :class:`SO3` - rotations, elements are 3x3 arrays.
* :class:`SO3xR3` - the direct product used for rigid-body phase space,
  elements are :class:`ProductPoint` ``(rotation, momentum)``.
* :class:`DiagExp` - R^N represented as ``diag(exp(x))``, elements are the
  coordinate vectors ``x`` themselves.

Coordinates are always ordered as the basis is: for the product group the
rotation block comes first, then the momentum block.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Any, NamedTuple

import numpy as np
from scipy.special import bernoulli

from lieprop.lie import so3

SERIES_DERIVATIVE_ORDER = 6


class ProductPoint(NamedTuple):
    """Element (R, l) of SO(3) x R^3."""

    rotation: np.ndarray
    momentum: np.ndarray


def hat(x: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Return sum_i x_i E_i for a stack of basis matrices ``basis[i]``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != basis.shape[0]:
        raise ValueError(f"expected {basis.shape[0]} coordinates, got {x.shape[-1]}")
    return np.einsum("...i,ijk->...jk", x, basis)


def vee(X: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Coordinates of X in ``basis`` (least squares against the flattened basis)."""
    flat = basis.reshape(basis.shape[0], -1)
    X = np.asarray(X, dtype=float)
    rhs = X.reshape(X.shape[:-2] + (-1,))
    return rhs @ np.linalg.pinv(flat)


def ad_matrix(x: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Matrix of ad(X) built column by column from brackets [X, E_j]."""
    X = hat(x, basis)
    cols = [vee(X @ E - E @ X, basis) for E in basis]
    return np.stack(cols, axis=-1)


@lru_cache(maxsize=None)
def _series_coefficients(order: int) -> np.ndarray:
    # B_{2k} / (2k)! for k = 0..order
    b = bernoulli(2 * order)
    k = np.arange(order + 1)
    fact = np.array([float(np.prod(np.arange(1, 2 * j + 1, dtype=float))) for j in k])
    return b[2 * k] / fact


def jl_inv_series(ad_x: np.ndarray, order: int) -> np.ndarray:
    """Bernoulli series -ad/2 + sum_{k<=order} B_2k/(2k)! ad^(2k)."""
    if order < 0:
        raise ValueError("series order must be non-negative")
    n = ad_x.shape[-1]
    coeffs = _series_coefficients(order)
    ad2 = ad_x @ ad_x
    term = np.eye(n)
    out = -0.5 * ad_x + coeffs[0] * term
    for k in range(1, order + 1):
        term = term @ ad2
        out = out + coeffs[k] * term
    return out


def djl_inv_series(ad_x: np.ndarray, ad_basis: np.ndarray, order: int) -> np.ndarray:
    """Term-wise derivative of :func:`jl_inv_series`; ``out[k]`` is d/dx_k."""
    n = ad_x.shape[-1]
    coeffs = _series_coefficients(order)
    powers = [np.eye(n)]
    for _ in range(2 * order):
        powers.append(powers[-1] @ ad_x)
    out = np.empty((ad_basis.shape[0], n, n))
    for k, ad_k in enumerate(ad_basis):
        acc = -0.5 * ad_k
        for m in range(1, order + 1):
            deg = 2 * m
            d = sum(powers[p] @ ad_k @ powers[deg - 1 - p] for p in range(deg))
            acc = acc + coeffs[m] * d
        out[k] = acc
    return out


class MatrixLieGroup:
    """Base class: generic constructions from the basis and ad matrices.

    Subclasses supply exp/log/compose/inverse and the matrix representation;
    everything else has a generic default that may be overridden by a closed
    form.
    """

    dim: int
    basis: np.ndarray

    # element plumbing -------------------------------------------------
    def identity(self) -> Any:
        raise NotImplementedError

    def compose(self, a: Any, b: Any) -> Any:
        raise NotImplementedError

    def inverse(self, g: Any) -> Any:
        raise NotImplementedError

    def exp(self, x: np.ndarray) -> Any:
        raise NotImplementedError

    def log(self, g: Any) -> np.ndarray:
        raise NotImplementedError

    def matrix(self, g: Any) -> np.ndarray:
        raise NotImplementedError

    def validate(self, g: Any) -> None:
        pass

    # algebra -----------------------------------------------------------
    def hat(self, x: np.ndarray) -> np.ndarray:
        return hat(x, self.basis)

    def vee(self, X: np.ndarray) -> np.ndarray:
        return vee(X, self.basis)

    def ad(self, x: np.ndarray) -> np.ndarray:
        return ad_matrix(x, self.basis)

    def ad_basis(self) -> np.ndarray:
        """Stack of ad(E_i); constant, so cached per instance."""
        cached = getattr(self, "_ad_basis", None)
        if cached is None:
            cached = np.stack([self.ad(e) for e in np.eye(self.dim)])
            self._ad_basis = cached
        return cached

    def Ad(self, g: Any) -> np.ndarray:
        G = self.matrix(g)
        Ginv = np.linalg.inv(G)
        return np.stack([self.vee(G @ E @ Ginv) for E in self.basis], axis=-1)

    # Jacobians ---------------------------------------------------------
    def jl_inv(self, x: np.ndarray) -> np.ndarray:
        return jl_inv_series(self.ad(x), 20)

    def jr_inv(self, x: np.ndarray) -> np.ndarray:
        return jl_inv_series(-self.ad(x), 20)

    def jl(self, x: np.ndarray) -> np.ndarray:
        return np.linalg.inv(self.jl_inv(x))

    def jr(self, x: np.ndarray) -> np.ndarray:
        return np.linalg.inv(self.jr_inv(x))

    def jl_inv_series(self, x: np.ndarray, order: int) -> np.ndarray:
        return jl_inv_series(self.ad(x), order)

    def djl_inv_dx(self, x: np.ndarray) -> np.ndarray:
        """Partials of jl_inv stacked on the first axis (series of fixed order)."""
        return djl_inv_series(self.ad(x), self.ad_basis(), SERIES_DERIVATIVE_ORDER)


class SO3(MatrixLieGroup):
    dim = 3
    basis = so3.BASIS

    def identity(self) -> np.ndarray:
        return np.eye(3)

    def compose(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a @ b

    def inverse(self, g: np.ndarray) -> np.ndarray:
        return np.swapaxes(g, -1, -2)

    def exp(self, x: np.ndarray) -> np.ndarray:
        return so3.exp(x)

    def log(self, g: np.ndarray) -> np.ndarray:
        return so3.log(g)

    def matrix(self, g: np.ndarray) -> np.ndarray:
        return np.asarray(g, dtype=float)

    def validate(self, g: np.ndarray) -> None:
        if not so3.is_rotation(g):
            raise ValueError("not a rotation matrix (orthonormality/determinant off by > 1e-9)")

    def hat(self, x: np.ndarray) -> np.ndarray:
        return so3.hat(x)

    def vee(self, X: np.ndarray) -> np.ndarray:
        return so3.vee(X)

    def ad(self, x: np.ndarray) -> np.ndarray:
        return so3.hat(x)

    def Ad(self, g: np.ndarray) -> np.ndarray:
        return np.asarray(g, dtype=float)

    def jl_inv(self, x: np.ndarray) -> np.ndarray:
        return so3.jl_inv(x)

    def jr_inv(self, x: np.ndarray) -> np.ndarray:
        return so3.jr_inv(x)

    def jl(self, x: np.ndarray) -> np.ndarray:
        return so3.jl(x)

    def jr(self, x: np.ndarray) -> np.ndarray:
        return so3.jr(x)

    def djl_inv_dx(self, x: np.ndarray) -> np.ndarray:
        return so3.djl_inv_dx(x)


def _block_diag3(rot: np.ndarray, lower: np.ndarray) -> np.ndarray:
    out = np.zeros(rot.shape[:-2] + (6, 6))
    out[..., :3, :3] = rot
    out[..., 3:, 3:] = lower
    return out


class SO3xR3(MatrixLieGroup):
    """Direct product SO(3) x (R^3, +) with the 6x6 block representation."""

    dim = 6

    def __init__(self) -> None:
        basis = np.zeros((6, 6, 6))
        basis[:3, :3, :3] = so3.BASIS
        for i in range(3):
            basis[3 + i, 3 + i, 3 + i] = 1.0
        self.basis = basis

    def identity(self) -> ProductPoint:
        return ProductPoint(np.eye(3), np.zeros(3))

    def compose(self, a: ProductPoint, b: ProductPoint) -> ProductPoint:
        return ProductPoint(a.rotation @ b.rotation, a.momentum + b.momentum)

    def inverse(self, g: ProductPoint) -> ProductPoint:
        return ProductPoint(np.swapaxes(g.rotation, -1, -2), -g.momentum)

    def exp(self, x: np.ndarray) -> ProductPoint:
        x = np.asarray(x, dtype=float)
        return ProductPoint(so3.exp(x[..., :3]), x[..., 3:].copy())

    def log(self, g: ProductPoint) -> np.ndarray:
        return np.concatenate([so3.log(g.rotation), np.asarray(g.momentum, dtype=float)], axis=-1)

    def matrix(self, g: ProductPoint) -> np.ndarray:
        lower = np.zeros(np.shape(g.momentum)[:-1] + (3, 3))
        idx = np.arange(3)
        lower[..., idx, idx] = np.exp(g.momentum)
        return _block_diag3(g.rotation, lower)

    def validate(self, g: ProductPoint) -> None:
        if not so3.is_rotation(g.rotation):
            raise ValueError("rotation block is not a rotation matrix")
        if np.shape(g.momentum)[-1] != 3:
            raise ValueError("momentum block must have length 3")

    def hat(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lower = np.zeros(x.shape[:-1] + (3, 3))
        idx = np.arange(3)
        lower[..., idx, idx] = x[..., 3:]
        return _block_diag3(so3.hat(x[..., :3]), lower)

    def vee(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        diag = np.diagonal(X[..., 3:, 3:], axis1=-2, axis2=-1)
        return np.concatenate([so3.vee(X[..., :3, :3]), diag], axis=-1)

    def ad(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return _block_diag3(so3.hat(x[..., :3]), np.zeros(x.shape[:-1] + (3, 3)))

    def Ad(self, g: ProductPoint) -> np.ndarray:
        return _block_diag3(np.asarray(g.rotation, dtype=float), np.eye(3))

    def jl_inv(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return _block_diag3(so3.jl_inv(x[..., :3]), np.broadcast_to(np.eye(3), x.shape[:-1] + (3, 3)))

    def jr_inv(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return _block_diag3(so3.jr_inv(x[..., :3]), np.broadcast_to(np.eye(3), x.shape[:-1] + (3, 3)))

    def jl(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return _block_diag3(so3.jl(x[..., :3]), np.broadcast_to(np.eye(3), x.shape[:-1] + (3, 3)))

    def jr(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return _block_diag3(so3.jr(x[..., :3]), np.broadcast_to(np.eye(3), x.shape[:-1] + (3, 3)))

    def djl_inv_dx(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (6, 6, 6))
        out[..., :3, :3, :3] = so3.djl_inv_dx(x[..., :3])
        return out


class DiagExp(MatrixLieGroup):
    """(R^N, +) as the commutative matrix group diag(e^x); all Jacobians are I."""

    def __init__(self, n: int) -> None:
        if n < 1:
            raise ValueError("dimension must be positive")
        self.dim = n
        basis = np.zeros((n, n, n))
        for i in range(n):
            basis[i, i, i] = 1.0
        self.basis = basis

    def identity(self) -> np.ndarray:
        return np.zeros(self.dim)

    def compose(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.asarray(a, dtype=float) + np.asarray(b, dtype=float)

    def inverse(self, g: np.ndarray) -> np.ndarray:
        return -np.asarray(g, dtype=float)

    def exp(self, x: np.ndarray) -> np.ndarray:
        return np.array(x, dtype=float)

    def log(self, g: np.ndarray) -> np.ndarray:
        return np.array(g, dtype=float)

    def matrix(self, g: np.ndarray) -> np.ndarray:
        return np.diag(np.exp(np.asarray(g, dtype=float)))

    def vee(self, X: np.ndarray) -> np.ndarray:
        return np.diagonal(np.asarray(X, dtype=float), axis1=-2, axis2=-1).copy()

    def ad(self, x: np.ndarray) -> np.ndarray:
        return np.zeros(np.shape(x)[:-1] + (self.dim, self.dim))

    def Ad(self, g: np.ndarray) -> np.ndarray:
        return np.eye(self.dim)

    def jl_inv(self, x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.eye(self.dim), np.shape(x)[:-1] + (self.dim, self.dim)).copy()

    jr_inv = jl_inv
    jl = jl_inv
    jr = jl_inv

    def djl_inv_dx(self, x: np.ndarray) -> np.ndarray:
        return np.zeros(np.shape(x)[:-1] + (self.dim, self.dim, self.dim))
