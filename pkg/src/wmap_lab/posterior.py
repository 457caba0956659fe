"""Posterior for ``m = A u + e`` with unit-variance Gaussian noise, and the
Monte Carlo machinery built on it: importance sampling with prior proposals,
random-walk Metropolis, conditional-mean and small-ball estimates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .priors import PriorModel
from .sampling import MCEstimate, SampleBatch, generate_chunked
from .seqspace import CoeffVec, HierState

__all__ = [
    "ForwardOperator",
    "PosteriorModel",
    "BallProbability",
    "posterior_log_density",
    "posterior_log_deriv",
    "objective",
    "sample_posterior_is",
    "sample_posterior_rwm",
    "cm_estimate",
    "small_ball_prob",
    "small_ball_ratio",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ForwardOperator:
    """Dense ``M x N`` matrix acting on coefficient vectors."""

    matrix: np.ndarray

    def __post_init__(self):
        A = np.array(self.matrix, dtype=float)
        if A.ndim == 1:
            A = A.reshape(1, -1)
        if A.ndim != 2 or A.size == 0:
            raise ValueError("forward matrix must be a non-empty 2-D array")
        if not np.all(np.isfinite(A)):
            raise ValueError("forward matrix entries must be finite")
        A.setflags(write=False)
        object.__setattr__(self, "matrix", A)

    @property
    def M(self) -> int:
        return self.matrix.shape[0]

    @property
    def N(self) -> int:
        return self.matrix.shape[1]


class PosteriorModel:
    """Prior plus the likelihood ``exp(-1/2 |A u - m|^2)``.

    Presents the same flat-array interface as the priors, so fields, solvers
    and samplers treat priors and posteriors alike.  For the hierarchical
    prior the operator acts on the ``u`` part of the state only.
    """

    def __init__(self, prior: PriorModel, op: ForwardOperator, data):
        if not isinstance(op, ForwardOperator):
            op = ForwardOperator(op)
        m = np.array(data, dtype=float).reshape(-1)
        if op.N != prior.trunc:
            raise ValueError(f"operator has {op.N} columns, prior truncation is {prior.trunc}")
        if m.size != op.M:
            raise ValueError(f"data has {m.size} entries, operator has {op.M} rows")
        if not np.all(np.isfinite(m)):
            raise ValueError("data must be finite")
        m.setflags(write=False)
        self.prior, self.op, self.data = prior, op, m

    trunc = property(lambda self: self.prior.trunc)
    dim = property(lambda self: self.prior.dim)
    smooth = property(lambda self: self.prior.smooth)
    hierarchical = property(lambda self: self.prior.hierarchical)

    def to_flat(self, x):
        return self.prior.to_flat(x)

    def from_flat(self, arr):
        return self.prior.from_flat(arr)

    def kinks(self, x, h):
        return self.prior.kinks(x, h)

    def misfit_flat(self, X: np.ndarray) -> np.ndarray:
        return X[..., : self.trunc] @ self.op.matrix.T - self.data

    def log_density_flat(self, X):
        r = self.misfit_flat(X)
        return -0.5 * np.sum(r**2, axis=-1) + self.prior.log_density_flat(X)

    def log_deriv_flat(self, X, h):
        Ah = self.op.matrix @ h[: self.trunc]
        return -(self.misfit_flat(X) @ Ah) + self.prior.log_deriv_flat(X, h)

    def objective_flat(self, X):
        r = self.misfit_flat(X)
        return 0.5 * np.sum(r**2, axis=-1) + self.prior.J_flat(X)

    def objective_grad_flat(self, X):
        g = self.prior.J_grad_flat(X).copy()
        g[..., : self.trunc] += self.misfit_flat(X) @ self.op.matrix
        return g

    def __repr__(self):
        return f"PosteriorModel({self.prior!r}, M={self.op.M})"


def posterior_log_density(post: PosteriorModel, u) -> float:
    """Unnormalized posterior log-density ``-1/2 |A u - m|^2 + log pi_prior(u)``."""
    return float(post.log_density_flat(post.to_flat(u)))


def posterior_log_deriv(post: PosteriorModel, u, h) -> float:
    """``-<A u - m, A h> + beta^prior_h(u)``."""
    return float(post.log_deriv_flat(post.to_flat(u), post.to_flat(h)))


def objective(post: PosteriorModel, u) -> float:
    """``F(u) = 1/2 |A u - m|^2 + J(u)``."""
    return float(post.objective_flat(post.to_flat(u)))


def sample_posterior_is(post: PosteriorModel, seed: int, count: int) -> SampleBatch:
    """Prior draws carrying likelihood log-weights ``-1/2 |A u - m|^2``."""
    draws = generate_chunked(post.prior.sample_flat, seed, count)
    logw = -0.5 * np.sum(post.misfit_flat(draws) ** 2, axis=1)
    batch = SampleBatch(
        draws, trunc=post.trunc, seed=seed, source="prior-importance", log_weights=logw,
        meta={"chunking": "fixed-65536"},
    )
    ess = batch.ess
    batch.meta["ess"] = ess
    batch.meta["warnings"] = []
    if ess < 0.01 * count:
        msg = f"degenerate importance weights: ESS {ess:.1f} of {count}"
        batch.meta["warnings"].append(msg)
        log.warning(msg)
    return batch


def sample_posterior_rwm(
    post: PosteriorModel,
    seed: int,
    count: int,
    step_size: float,
    burn_in: int = 0,
    n_chains: int = 1,
    initial=None,
) -> SampleBatch:
    """Random-walk Metropolis with proposals ``x + step_size * scales * xi``.

    ``scales`` are the prior's per-coordinate spreads (``a_l`` for Besov).
    Chains run side by side, vectorized, and are stored chain-major; ``count``
    is the total number of returned states and must divide evenly among chains.
    """
    if step_size <= 0:
        raise ValueError("step_size must be positive")
    if count < 1 or burn_in < 0 or n_chains < 1 or count % n_chains:
        raise ValueError("need count >= 1, burn_in >= 0, and count divisible by n_chains")
    per_chain = count // n_chains
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    scale = step_size * post.prior.scales
    x = np.zeros((n_chains, post.dim))
    if initial is not None:
        x[:] = post.to_flat(initial)
    lp = post.log_density_flat(x)
    out = np.empty((n_chains, per_chain, post.dim))
    accepted = 0
    block = 4096
    total = burn_in + per_chain
    for start in range(0, total, block):
        n = min(block, total - start)
        xi = rng.standard_normal((n, n_chains, post.dim)) * scale
        log_u = np.log(rng.random((n, n_chains)))
        for k in range(n):
            y = x + xi[k]
            lq = post.log_density_flat(y)
            acc = log_u[k] < lq - lp
            x = np.where(acc[:, None], y, x)
            lp = np.where(acc, lq, lp)
            step = start + k
            if step >= burn_in:
                accepted += int(acc.sum())
                out[:, step - burn_in] = x
    rate = accepted / (per_chain * n_chains)
    warnings = []
    if not 0.1 <= rate <= 0.6:
        msg = f"acceptance rate {rate:.3f} outside [0.1, 0.6]"
        warnings.append(msg)
        log.warning(msg)
    return SampleBatch(
        out.reshape(count, post.dim), trunc=post.trunc, seed=seed, source="rw-metropolis",
        meta={
            "n_chains": n_chains, "step_size": step_size, "burn_in": burn_in,
            "acceptance_rate": rate, "warnings": warnings,
        },
    )


def cm_estimate(batch: SampleBatch) -> CoeffVec | HierState:
    """Conditional mean: the (weighted) average of the draws."""
    w = batch.weights
    if w is not None and not np.all(np.isfinite(w)):
        raise ValueError("importance weights are all zero or non-finite")
    mean = batch.estimate(batch.draws).estimate
    return HierState.from_flat(mean) if batch.hierarchical else CoeffVec(mean, batch.trunc)


class BallProbability(NamedTuple):
    estimate: float
    stderr: float
    hits: int


def _in_ball(post: PosteriorModel, batch: SampleBatch, center, eps: float) -> np.ndarray:
    c = post.to_flat(center)
    if batch.draws.shape[1] != c.size:
        raise ValueError("batch and center dimensions differ")
    return (np.sum((batch.draws - c) ** 2, axis=1) <= eps * eps).astype(float)


def small_ball_prob(post: PosteriorModel, center, eps: float, batch: SampleBatch) -> BallProbability:
    """Posterior mass of the Euclidean coefficient ball ``B_eps(center)``.

    Zero hits give ``(0, 0, 0)``; callers check ``hits``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    ind = _in_ball(post, batch, center, eps)
    hits = int(ind.sum())
    if hits == 0:
        return BallProbability(0.0, 0.0, 0)
    est = batch.estimate(ind)
    return BallProbability(est.estimate, est.stderr, hits)


def small_ball_ratio(post: PosteriorModel, center, h, eps: float, batch: SampleBatch) -> MCEstimate:
    """``mu(B_eps(center - h)) / mu(B_eps(center))`` on one batch, delta-method stderr."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    c, d = post.to_flat(center), post.to_flat(h)
    shifted = _in_ball(post, batch, c - d, eps)
    base = _in_ball(post, batch, c, eps)
    p_shift, p_base = batch.estimate(shifted).estimate, batch.estimate(base).estimate
    if p_base == 0:
        return MCEstimate(float("nan"), float("inf"))
    ratio = p_shift / p_base
    influence = (shifted - ratio * base) / p_base
    return MCEstimate(float(ratio), float(batch.estimate(influence).stderr))
