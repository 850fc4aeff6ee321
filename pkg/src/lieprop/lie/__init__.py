"""Lie-group primitives: SO(3) closed forms and the supported group types."""

from lieprop.lie import so3
from lieprop.lie.groups import (
    SERIES_DERIVATIVE_ORDER,
    SO3,
    DiagExp,
    MatrixLieGroup,
    ProductPoint,
    SO3xR3,
    ad_matrix,
    djl_inv_series,
    hat,
    jl_inv_series,
    vee,
)
from lieprop.lie.so3 import AngleAtPi, DomainError

__all__ = [
    "AngleAtPi",
    "DiagExp",
    "DomainError",
    "MatrixLieGroup",
    "ProductPoint",
    "SERIES_DERIVATIVE_ORDER",
    "SO3",
    "SO3xR3",
    "ad_matrix",
    "djl_inv_series",
    "hat",
    "jl_inv_series",
    "so3",
    "vee",
]
