"""Prior families: Gaussian with diagonal covariance, Besov ``B^s_p``, and the
hierarchical Gaussian prior with an uncertain mean along a fixed direction.

Each model is immutable and works internally on *flat* arrays: shape
``(..., dim)`` where ``dim`` is the truncation (plus one for the hierarchical
hyperparameter ``t``).  For every family the finite-dimensional log-density is
``log_norm - J(u)``, so the logarithmic derivative along ``h`` is
``-J'(u) h`` and both share a single gradient implementation.
"""

from __future__ import annotations

import abc
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .sampling import SampleBatch, generate_chunked
from .seqspace import BesovWeights, CoeffVec, HierState, TruncationError

__all__ = [
    "PriorModel",
    "GaussianDiagPrior",
    "BesovPrior",
    "HierarchicalPrior",
    "gen_gaussian_sample",
    "gen_gaussian_log_norm",
    "sample_prior",
    "log_density",
    "log_deriv_prior",
    "j_value",
    "j_grad_dir",
    "fisher_information",
]


def gen_gaussian_log_norm(p: float) -> float:
    """``log sigma_p`` where ``sigma_p = 1 / int exp(-|x|^p) dx = p / (2 Gamma(1/p))``."""
    return float(np.log(p / 2.0) - gammaln(1.0 / p))


def gen_gaussian_sample(rng: np.random.Generator, p: float, size) -> np.ndarray:
    """Draws with density ``sigma_p exp(-|x|^p)``.

    ``|X|^p`` is Gamma(1/p, 1) distributed; the sign is an independent fair coin.
    """
    g = rng.gamma(1.0 / p, 1.0, size=size)
    sign = np.where(rng.random(size=size) < 0.5, -1.0, 1.0)
    return sign * g ** (1.0 / p)


class PriorModel(abc.ABC):
    """Common interface of the three prior families."""

    trunc: int
    family: str
    smooth = True

    @property
    def dim(self) -> int:
        return self.trunc

    @property
    def hierarchical(self) -> bool:
        return False

    # -- conversions -----------------------------------------------------
    def to_flat(self, x) -> np.ndarray:
        """Validate a state (or direction) and return it as a flat array."""
        if isinstance(x, HierState):
            raise TypeError(f"{self.family} prior takes CoeffVec states, not HierState")
        if isinstance(x, CoeffVec):
            if x.trunc != self.trunc:
                raise TruncationError(f"truncation mismatch: model {self.trunc}, vector {x.trunc}")
            return x.entries
        arr = np.asarray(x, dtype=float).reshape(-1)
        if arr.size != self.dim:
            raise TruncationError(f"expected {self.dim} coefficients, got {arr.size}")
        return arr

    def from_flat(self, arr) -> CoeffVec | HierState:
        return CoeffVec(arr, self.trunc)

    # -- the functional J and its gradient -------------------------------
    @abc.abstractmethod
    def J_flat(self, X: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def J_grad_flat(self, X: np.ndarray) -> np.ndarray: ...

    @property
    @abc.abstractmethod
    def log_norm(self) -> float:
        """Log normalizing constant of the finite-dimensional density."""

    @abc.abstractmethod
    def sample_flat(self, rng: np.random.Generator, count: int) -> np.ndarray: ...

    @property
    @abc.abstractmethod
    def scales(self) -> np.ndarray:
        """Per-coordinate spread, used to scale random-walk proposals."""

    def log_density_flat(self, X: np.ndarray) -> np.ndarray:
        return self.log_norm - self.J_flat(X)

    def log_deriv_flat(self, X: np.ndarray, h: np.ndarray) -> np.ndarray:
        return -(self.J_grad_flat(X) @ h)

    def kinks(self, x: np.ndarray, h: np.ndarray) -> np.ndarray:
        """Points ``s`` in (0, 1) where ``s -> log_deriv(x - s h, h)`` is not smooth."""
        return np.empty(0)


class GaussianDiagPrior(PriorModel):
    """Zero-mean Gaussian with Cameron-Martin weights ``q``: ``J(u) = 1/2 sum q_l u_l^2``."""

    family = "gaussian"

    def __init__(self, cm_weights: Sequence[float]):
        q = np.array(cm_weights, dtype=float).reshape(-1)
        if q.size == 0 or np.any(~np.isfinite(q)) or np.any(q <= 0):
            raise ValueError("cm_weights must be a non-empty sequence of positive reals")
        q.setflags(write=False)
        self.cm_weights = q
        self.trunc = q.size
        self._log_norm = float(0.5 * np.sum(np.log(q / (2.0 * np.pi))))

    @classmethod
    def white(cls, trunc: int) -> "GaussianDiagPrior":
        """White noise: unit Cameron-Martin weights, ``J(u) = 1/2 |u|^2``."""
        return cls(np.ones(trunc))

    def J_flat(self, X):
        return 0.5 * np.sum(self.cm_weights * X**2, axis=-1)

    def J_grad_flat(self, X):
        return self.cm_weights * X

    @property
    def log_norm(self):
        return self._log_norm

    def sample_flat(self, rng, count):
        return rng.standard_normal((count, self.trunc)) / np.sqrt(self.cm_weights)

    @property
    def scales(self):
        return 1.0 / np.sqrt(self.cm_weights)

    def __repr__(self):
        return f"GaussianDiagPrior(trunc={self.trunc})"


class BesovPrior(PriorModel):
    """``B^s_p`` prior: coefficient ``l`` is ``a_l X_l`` with ``X_l ~ sigma_p exp(-|x|^p)``.

    ``J(u) = sum_l w_l |u_l|^p = ||u||_{B^s_p}^p``.
    """

    family = "besov"

    def __init__(self, wts: BesovWeights, trunc: int):
        if int(trunc) != trunc or trunc < 1:
            raise ValueError(f"trunc must be a positive integer, got {trunc!r}")
        self.wts = wts
        self.trunc = int(trunc)
        self.p = wts.p
        self._w = wts.norm_weights(self.trunc)
        self._a = wts.scales(self.trunc)
        self._log_norm = float(self.trunc * gen_gaussian_log_norm(self.p) - np.sum(np.log(self._a)))

    @property
    def smooth(self):
        return self.p == 2.0

    def with_trunc(self, trunc: int) -> "BesovPrior":
        return BesovPrior(self.wts, trunc)

    def J_flat(self, X):
        return np.sum(self._w * np.abs(X) ** self.p, axis=-1)

    def J_grad_flat(self, X):
        # sign(0) = 0 keeps the gradient continuous at zero for p > 1
        return self.p * self._w * np.sign(X) * np.abs(X) ** (self.p - 1.0)

    def J_grad_inverse(self, Z: np.ndarray) -> np.ndarray:
        """Solve ``J'(u) = z`` coordinatewise (``J'`` is a bijection for p > 1)."""
        return np.sign(Z) * (np.abs(Z) / (self.p * self._w)) ** (1.0 / (self.p - 1.0))

    def J_grad_inverse_deriv(self, Z: np.ndarray) -> np.ndarray:
        q = 1.0 / (self.p - 1.0)
        pw = self.p * self._w
        return q * (np.abs(Z) / pw) ** (q - 1.0) / pw

    @property
    def log_norm(self):
        return self._log_norm

    def sample_flat(self, rng, count):
        return self._a * gen_gaussian_sample(rng, self.p, (count, self.trunc))

    @property
    def scales(self):
        return self._a

    def kinks(self, x, h):
        nz = h != 0
        s = x[nz] / h[nz]
        return np.unique(s[(s > 0) & (s < 1)])

    def __repr__(self):
        w = self.wts
        return f"BesovPrior(s={w.s}, p={w.p}, d={w.d}, trunc={self.trunc})"


class HierarchicalPrior(PriorModel):
    """Gaussian ``nu`` shifted by ``t e`` with a normal hyperprior ``t ~ N(0, rho_variance)``.

    ``J(u, t) = 1/2 ||u - t e||^2_{H(nu)} + t^2 / (2 rho_variance)``.
    """

    family = "hierarchical"

    def __init__(self, cov_weights: Sequence[float], mean_direction, rho_variance: float = 1.0):
        q = np.array(cov_weights, dtype=float).reshape(-1)
        if q.size == 0 or np.any(~np.isfinite(q)) or np.any(q <= 0):
            raise ValueError("cov_weights must be a non-empty sequence of positive reals")
        e = mean_direction.entries if isinstance(mean_direction, CoeffVec) else mean_direction
        e = np.array(e, dtype=float).reshape(-1)
        if e.size != q.size:
            raise TruncationError(f"mean direction has {e.size} entries, weights have {q.size}")
        if not np.all(np.isfinite(e)) or not np.any(e != 0):
            raise ValueError("mean direction must be finite and nonzero")
        if not (np.isfinite(rho_variance) and rho_variance > 0):
            raise ValueError("rho_variance must be positive")
        q.setflags(write=False)
        e.setflags(write=False)
        self.cov_weights, self.mean_direction = q, e
        self.rho_variance = float(rho_variance)
        self.trunc = q.size
        self._log_norm = float(
            0.5 * np.sum(np.log(q / (2.0 * np.pi))) - 0.5 * np.log(2.0 * np.pi * self.rho_variance)
        )

    @property
    def dim(self):
        return self.trunc + 1

    @property
    def hierarchical(self):
        return True

    def to_flat(self, x):
        if isinstance(x, HierState):
            if x.trunc != self.trunc:
                raise TruncationError(f"truncation mismatch: model {self.trunc}, state {x.trunc}")
            return x.flat()
        if isinstance(x, CoeffVec):
            raise TypeError("hierarchical prior needs a HierState (u, t), not a bare CoeffVec")
        if isinstance(x, tuple) and len(x) == 2:
            return self.to_flat(HierState(x[0] if isinstance(x[0], CoeffVec) else CoeffVec(x[0], self.trunc), x[1]))
        arr = np.asarray(x, dtype=float).reshape(-1)
        if arr.size != self.dim:
            raise TruncationError(f"expected {self.dim} entries (u, t), got {arr.size}")
        return arr

    def from_flat(self, arr):
        return HierState.from_flat(arr)

    def _split(self, X):
        return X[..., :-1], X[..., -1]

    def J_flat(self, X):
        u, t = self._split(X)
        r = u - t[..., None] * self.mean_direction
        return 0.5 * np.sum(self.cov_weights * r**2, axis=-1) + 0.5 * t**2 / self.rho_variance

    def J_grad_flat(self, X):
        u, t = self._split(X)
        qr = self.cov_weights * (u - t[..., None] * self.mean_direction)
        gt = -(qr @ self.mean_direction) + t / self.rho_variance
        return np.concatenate([qr, gt[..., None]], axis=-1)

    @property
    def log_norm(self):
        return self._log_norm

    def sample_flat(self, rng, count):
        t = np.sqrt(self.rho_variance) * rng.standard_normal(count)
        u = t[:, None] * self.mean_direction + rng.standard_normal((count, self.trunc)) / np.sqrt(self.cov_weights)
        return np.concatenate([u, t[:, None]], axis=1)

    @property
    def scales(self):
        su = np.sqrt(1.0 / self.cov_weights + self.rho_variance * self.mean_direction**2)
        return np.append(su, np.sqrt(self.rho_variance))

    def __repr__(self):
        return f"HierarchicalPrior(trunc={self.trunc}, rho_variance={self.rho_variance})"


# -- module-level operations --------------------------------------------


def sample_prior(model: PriorModel, trunc: int, seed: int, count: int) -> SampleBatch:
    """``count`` independent prior draws, reproducible from ``(seed, trunc, count)``."""
    if trunc != model.trunc:
        if isinstance(model, BesovPrior):
            model = model.with_trunc(trunc)
        else:
            raise TruncationError(f"model truncation is {model.trunc}, requested {trunc}")
    draws = generate_chunked(model.sample_flat, seed, count)
    return SampleBatch(draws, trunc=model.trunc, seed=seed, source="direct-prior", meta={"chunking": "fixed-65536"})


def log_density(model: PriorModel, x) -> float:
    """Exact log of the finite-dimensional prior density, normalization included."""
    return float(model.log_density_flat(model.to_flat(x)))


def log_deriv_prior(model: PriorModel, x, h) -> float:
    """Logarithmic derivative ``beta_h(x)`` of the prior; linear in ``h``."""
    return float(model.log_deriv_flat(model.to_flat(x), model.to_flat(h)))


def j_value(model: PriorModel, x) -> float:
    return float(model.J_flat(model.to_flat(x)))


def j_grad_dir(model: PriorModel, x, h) -> float:
    """``J'(x) h``; exactly ``-log_deriv_prior(model, x, h)``."""
    return -log_deriv_prior(model, x, h)


def fisher_information(p: float) -> float:
    """Fisher information of the density ``sigma_p exp(-|x|^p)``, by adaptive quadrature.

    Evaluates ``p^2 int |t|^(2(p-1)) sigma_p exp(-|t|^p) dt``; the integrand is
    even so the half line is doubled.
    """
    if not (1.0 < p <= 2.0):
        raise ValueError(f"fisher_information needs 1 < p <= 2, got {p}")
    sigma = np.exp(gen_gaussian_log_norm(p))
    half, _ = integrate.quad(
        lambda t: t ** (2.0 * (p - 1.0)) * np.exp(-(t**p)), 0.0, np.inf, epsabs=1e-14, epsrel=1e-13, limit=200
    )
    return float(2.0 * p**2 * sigma * half)
