"""Finite-dimensional models of l^q_n and the fractional domain scale."""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, PreconditionError

INF = math.inf


def lq_norm(v, q, axis=-1):
    """l^q norm along ``axis``; complex entries contribute their moduli."""
    a = np.abs(np.asarray(v))
    if q == INF:
        return a.max(axis=axis, initial=0.0)
    if q == 2:
        return np.sqrt(np.sum(a * a, axis=axis))
    if q == 1:
        return np.sum(a, axis=axis)
    # rescale by the max to avoid overflow for large q
    m = a.max(axis=axis, keepdims=True, initial=0.0)
    safe = np.where(m > 0, m, 1.0)
    s = np.sum((a / safe) ** q, axis=axis) ** (1.0 / q)
    return s * np.squeeze(safe, axis=axis)


@dataclass(frozen=True)
class SpaceModel:
    """The space l^q_n. Use ``math.inf`` for q = infinity."""

    dim: int
    exponent: float = 2.0
    label: str = ""

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidInputError(f"dim must be a positive integer, got {self.dim}")
        q = float(self.exponent)
        if not (q >= 1.0):
            raise InvalidInputError(f"exponent must lie in [1, inf], got {self.exponent}")
        object.__setattr__(self, "exponent", q)

    @property
    def q(self):
        return self.exponent

    @property
    def is_hilbert(self):
        return self.exponent == 2.0

    def vector(self, coords):
        return XVector(np.asarray(coords), self)

    def norm(self, v):
        coords = v.coords if isinstance(v, XVector) else np.asarray(v)
        if coords.shape[-1] != self.dim:
            raise InvalidInputError(f"expected {self.dim} coordinates, got {coords.shape[-1]}")
        if not np.all(np.isfinite(coords)):
            raise InvalidInputError("vector has NaN or infinite coordinates")
        return float(lq_norm(coords, self.exponent)) if coords.ndim == 1 else lq_norm(coords, self.exponent)


@dataclass(frozen=True)
class XVector:
    coords: np.ndarray
    space: SpaceModel

    def __post_init__(self):
        c = np.array(self.coords)
        if c.ndim != 1 or c.shape[0] != self.space.dim:
            raise InvalidInputError(
                f"coordinate count {c.shape} does not match dim {self.space.dim}")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)


def norm(v, space=None):
    """Norm of an XVector (or of a raw array in ``space``)."""
    if isinstance(v, XVector):
        return v.space.norm(v)
    if space is None:
        raise InvalidInputError("a SpaceModel is required for raw arrays")
    return space.norm(v)


@dataclass(frozen=True)
class DomainScale:
    """X_alpha = D(A^alpha) with norm ||A^alpha x|| in the base space."""

    base: SpaceModel
    operator: object
    alpha: float
    _power: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise InvalidInputError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.operator.dim != self.base.dim:
            raise InvalidInputError("operator and base space dimensions differ")
        if not self.operator.invertible:
            raise PreconditionError("domain scale needs an invertible operator")
        from .sectorial import frac_power
        object.__setattr__(self, "_power", frac_power(self.operator, self.alpha))

    def norm(self, v):
        coords = v.coords if isinstance(v, XVector) else np.asarray(v)
        if not np.all(np.isfinite(coords)):
            raise InvalidInputError("vector has NaN or infinite coordinates")
        return self.base.norm(self._power @ coords)


def domain_norm(v, scale):
    return scale.norm(v)
