"""Coefficient-space primitives.

Everything in the package works on finite truncations of wavelet coefficient
sequences; basis functions are never evaluated. Indices are 1-based in the
mathematical sense (coefficient ``ell = 1..N``) and 0-based in the arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from numbers import Real

import numpy as np

__all__ = [
    "TruncationError",
    "CoeffVec",
    "HierState",
    "BesovWeights",
    "besov_norm_p",
    "weighted_inner",
    "basis_direction",
]


class TruncationError(ValueError):
    """Raised when objects of different truncation levels are combined."""


def _frozen_array(values, trunc=None) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if trunc is not None and arr.size != trunc:
        raise TruncationError(f"expected {trunc} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("coefficients must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CoeffVec:
    """A truncated coefficient sequence ``(c_1, ..., c_N)``.

    ``trunc`` is explicit and is checked against ``entries``; arithmetic
    between vectors of different truncation raises :class:`TruncationError`.
    """

    entries: np.ndarray
    trunc: int

    def __post_init__(self):
        if int(self.trunc) != self.trunc or self.trunc < 1:
            raise ValueError(f"trunc must be a positive integer, got {self.trunc!r}")
        object.__setattr__(self, "trunc", int(self.trunc))
        object.__setattr__(self, "entries", _frozen_array(self.entries, self.trunc))

    @classmethod
    def zeros(cls, trunc: int) -> "CoeffVec":
        return cls(np.zeros(trunc), trunc)

    def _check(self, other: "CoeffVec") -> None:
        if not isinstance(other, CoeffVec):
            raise TypeError(f"cannot combine CoeffVec with {type(other).__name__}")
        if other.trunc != self.trunc:
            raise TruncationError(f"truncation mismatch: {self.trunc} vs {other.trunc}")

    def __add__(self, other):
        self._check(other)
        return CoeffVec(self.entries + other.entries, self.trunc)

    def __sub__(self, other):
        self._check(other)
        return CoeffVec(self.entries - other.entries, self.trunc)

    def __neg__(self):
        return CoeffVec(-self.entries, self.trunc)

    def __mul__(self, scalar):
        if not isinstance(scalar, Real):
            return NotImplemented
        return CoeffVec(float(scalar) * self.entries, self.trunc)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if not isinstance(scalar, Real):
            return NotImplemented
        return CoeffVec(self.entries / float(scalar), self.trunc)

    def __eq__(self, other):
        if not isinstance(other, CoeffVec):
            return NotImplemented
        return self.trunc == other.trunc and np.array_equal(self.entries, other.entries)

    def __len__(self):
        return self.trunc

    def __array__(self, dtype=None, copy=None):
        return np.array(self.entries, dtype=dtype)

    def zero_extend(self, trunc: int) -> "CoeffVec":
        """Embed into a finer truncation by appending zeros."""
        if trunc < self.trunc:
            raise TruncationError(f"cannot extend {self.trunc} coefficients down to {trunc}")
        out = np.zeros(trunc)
        out[: self.trunc] = self.entries
        return CoeffVec(out, trunc)

    def __repr__(self):
        return f"CoeffVec({np.array2string(self.entries, precision=6)}, trunc={self.trunc})"


@dataclass(frozen=True, eq=False)
class HierState:
    """Joint state ``(u, t)`` of the hierarchical model; also used for directions."""

    u: CoeffVec
    t: float

    def __post_init__(self):
        if not isinstance(self.u, CoeffVec):
            raise TypeError("HierState.u must be a CoeffVec")
        t = float(self.t)
        if not np.isfinite(t):
            raise ValueError("HierState.t must be finite")
        object.__setattr__(self, "t", t)

    @property
    def trunc(self) -> int:
        return self.u.trunc

    @classmethod
    def from_flat(cls, flat) -> "HierState":
        flat = np.asarray(flat, dtype=float)
        return cls(CoeffVec(flat[:-1], flat.size - 1), float(flat[-1]))

    def flat(self) -> np.ndarray:
        return np.append(self.u.entries, self.t)

    def _check(self, other):
        if not isinstance(other, HierState):
            raise TypeError(f"cannot combine HierState with {type(other).__name__}")

    def __add__(self, other):
        self._check(other)
        return HierState(self.u + other.u, self.t + other.t)

    def __sub__(self, other):
        self._check(other)
        return HierState(self.u - other.u, self.t - other.t)

    def __neg__(self):
        return HierState(-self.u, -self.t)

    def __mul__(self, scalar):
        if not isinstance(scalar, Real):
            return NotImplemented
        return HierState(self.u * scalar, self.t * float(scalar))

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, HierState):
            return NotImplemented
        return self.u == other.u and self.t == other.t


@lru_cache(maxsize=256)
def _power_weights(exponent: float, trunc: int) -> np.ndarray:
    w = np.arange(1, trunc + 1, dtype=float) ** exponent
    w.setflags(write=False)
    return w


@dataclass(frozen=True)
class BesovWeights:
    """Per-index weights of the ``B^s_p`` scale on a ``d``-dimensional torus.

    norm weight           w_l = l^(p(s/d + 1/2) - 1)
    sampling scale        a_l = l^(-s/d - 1/2 + 1/p)
    differentiability     c_l = l^(s/d + 1/2 - 1/p) = 1 / a_l
    """

    s: float
    p: float
    d: int = 1

    def __post_init__(self):
        if not (1.0 < self.p <= 2.0):
            raise ValueError(f"Besov weights need 1 < p <= 2, got p={self.p}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension d must be a positive integer, got {self.d}")
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "d", int(self.d))

    def norm_weights(self, trunc: int) -> np.ndarray:
        return _power_weights(self.p * (self.s / self.d + 0.5) - 1.0, trunc)

    def scales(self, trunc: int) -> np.ndarray:
        return _power_weights(-self.s / self.d - 0.5 + 1.0 / self.p, trunc)

    def diff_weights(self, trunc: int) -> np.ndarray:
        return _power_weights(self.s / self.d + 0.5 - 1.0 / self.p, trunc)


def _entries(u) -> np.ndarray:
    if isinstance(u, CoeffVec):
        return u.entries
    return _frozen_array(u)


def besov_norm_p(u, wts: BesovWeights) -> float:
    """``(sum_l w_l |u_l|^p)^(1/p)`` over the truncation of ``u``."""
    c = _entries(u)
    w = wts.norm_weights(c.size)
    return float(np.sum(w * np.abs(c) ** wts.p) ** (1.0 / wts.p))


def weighted_inner(u, v, weights) -> float:
    """``sum_l weights_l u_l v_l``; the Cameron-Martin inner product for diagonal covariances."""
    a, b = _entries(u), _entries(v)
    if a.size != b.size:
        raise TruncationError(f"truncation mismatch: {a.size} vs {b.size}")
    wts = np.asarray(weights, dtype=float).reshape(-1)
    if wts.size != a.size:
        raise TruncationError(f"{wts.size} weights for {a.size} coefficients")
    if np.any(wts <= 0):
        raise ValueError("weights must be positive")
    return float(np.sum(wts * a * b))


def basis_direction(i: int, trunc: int) -> CoeffVec:
    """Unit vector ``e_i`` (1-based ``i``) at truncation ``trunc``."""
    if not 1 <= i <= trunc:
        raise IndexError(f"basis index {i} outside 1..{trunc}")
    e = np.zeros(trunc)
    e[i - 1] = 1.0
    return CoeffVec(e, trunc)
