"""Bregman distances of the prior functional ``J`` and the Bayes cost they induce."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .posterior import PosteriorModel
from .priors import PriorModel
from .sampling import MCEstimate, SampleBatch

__all__ = [
    "CostReport",
    "bregman",
    "bregman_hom",
    "bregman_hom_batch",
    "bayes_cost_G",
    "bayes_cost_terms",
    "compare_map_cm",
]


def _prior_of(model) -> PriorModel:
    return model.prior if isinstance(model, PosteriorModel) else model


def bregman(model, u, v) -> float:
    """``D_J(u, v) = J(u) - J(v) - J'(v)(u - v)``; non-negative for convex ``J``."""
    prior = _prior_of(model)
    x, y = prior.to_flat(u), prior.to_flat(v)
    return float(prior.J_flat(x) - prior.J_flat(y) - prior.J_grad_flat(y) @ (x - y))


def bregman_hom(model, u, v) -> float:
    """``D~_J(u, v) = J(u) + beta_u(v) = J(u) - J'(v) u``.

    ``D~_J(u, v) = D_J(u, v) + J(v) - J'(v) v``: the offset depends on ``v``
    alone, and ``D~`` may be negative.  For ``p``-homogeneous ``J`` the offset
    is ``-(p - 1) J(v)``.
    """
    prior = _prior_of(model)
    x, y = prior.to_flat(u), prior.to_flat(v)
    return float(prior.J_flat(x) + prior.log_deriv_flat(y, x))


def bregman_hom_batch(model, u, draws: np.ndarray) -> np.ndarray:
    """``D~_J(u, v)`` for every row ``v`` of ``draws``."""
    prior = _prior_of(model)
    x = prior.to_flat(u)
    return prior.J_flat(x) + prior.log_deriv_flat(draws, x)


def bayes_cost_terms(post: PosteriorModel, u, batch: SampleBatch) -> np.ndarray:
    """Per-draw integrand ``1/2 |A u - A v|^2 + D~_J(u, v)`` of the Bayes cost."""
    x = post.to_flat(u)
    n = post.trunc
    A = post.op.matrix
    diff = (x[:n] - batch.draws[:, :n]) @ A.T
    return 0.5 * np.sum(diff**2, axis=1) + bregman_hom_batch(post, x, batch.draws)


def bayes_cost_G(post: PosteriorModel, u, batch: SampleBatch) -> MCEstimate:
    """Monte Carlo estimate of ``G(u) = E_mu[1/2 |A u - A v|^2 + D~_J(u, v)]``."""
    return batch.estimate(bayes_cost_terms(post, u, batch))


@dataclass
class CostReport:
    cost_at_map: MCEstimate
    cost_at_cm: MCEstimate
    difference: MCEstimate
    shared_seed: int
    n_samples: int
    verdict: str


def compare_map_cm(post: PosteriorModel, u_map, u_cm, batch: SampleBatch) -> CostReport:
    """Compare ``E_mu D~_J(u_map, v)`` with ``E_mu D~_J(u_cm, v)`` on a single batch.

    The verdict is ``"map-leq-cm"`` when the MAP cost does not exceed the CM
    cost by more than three standard errors of the paired difference.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    d_map = bregman_hom_batch(post, u_map, batch.draws)
    d_cm = bregman_hom_batch(post, u_cm, batch.draws)
    c_map, c_cm = batch.estimate(d_map), batch.estimate(d_cm)
    diff = batch.estimate(d_map - d_cm)
    ok = np.isfinite(diff.stderr) and diff.estimate <= 3.0 * diff.stderr
    return CostReport(
        cost_at_map=c_map,
        cost_at_cm=c_cm,
        difference=diff,
        shared_seed=batch.seed,
        n_samples=len(batch),
        verdict="map-leq-cm" if ok else "inconclusive",
    )
