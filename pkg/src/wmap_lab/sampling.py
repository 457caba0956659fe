"""Seeded sample batches and Monte Carlo estimates with standard errors.

Random streams are derived from ``numpy.random.SeedSequence`` with one child
stream per fixed-size chunk, so a batch depends only on ``(seed, count,
chunk_size)`` and never on how many worker threads produced it.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .seqspace import CoeffVec, HierState

__all__ = [
    "CHUNK_SIZE",
    "MCEstimate",
    "SampleBatch",
    "thread_count",
    "chunk_rng",
    "generate_chunked",
    "batch_means_stderr",
]

CHUNK_SIZE = 1 << 16
THREADS_ENV = "WMAP_LAB_THREADS"
SOURCES = ("prior-importance", "rw-metropolis", "direct-prior")


class MCEstimate(NamedTuple):
    estimate: float
    stderr: float


def thread_count() -> int:
    """Worker threads allowed by ``WMAP_LAB_THREADS`` (default 1)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def chunk_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def generate_chunked(
    fn: Callable[[np.random.Generator, int], np.ndarray],
    seed: int,
    count: int,
    chunk_size: int = CHUNK_SIZE,
) -> np.ndarray:
    """Call ``fn(rng, n)`` once per chunk and stack the results along axis 0."""
    if count < 1:
        raise ValueError("count must be >= 1")
    sizes = [min(chunk_size, count - start) for start in range(0, count, chunk_size)]

    def work(i):
        return fn(chunk_rng(seed, i), sizes[i])

    threads = min(thread_count(), len(sizes))
    if threads == 1:
        parts = [work(i) for i in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    return np.concatenate(parts, axis=0)


def batch_means_stderr(values: np.ndarray, n_chains: int = 1, n_batches: int = 32) -> float:
    """Batch-means standard error of the mean of chain-major ``values``."""
    values = np.asarray(values, dtype=float)
    per_chain = values.size // n_chains
    chains = values[: per_chain * n_chains].reshape(n_chains, per_chain)
    per_chain_batches = max(1, n_batches // n_chains)
    size = per_chain // per_chain_batches
    if size < 1:
        return float("inf")
    means = chains[:, : size * per_chain_batches].reshape(n_chains * per_chain_batches, size).mean(axis=1)
    if means.size < 2:
        return float("inf")
    return float(np.std(means, ddof=1) / np.sqrt(means.size))


@dataclass(eq=False)
class SampleBatch:
    """Draws stored row-wise in a ``(K, dim)`` array.

    ``dim`` is the truncation, or truncation + 1 for hierarchical states whose
    last column is the hyperparameter ``t``.  ``log_weights`` (unnormalized)
    are present only for importance-sampled batches.
    """

    draws: np.ndarray
    trunc: int
    seed: int
    source: str
    log_weights: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float)
        if self.draws.ndim != 2 or self.draws.shape[0] == 0:
            raise ValueError("draws must be a non-empty (K, dim) array")
        if self.draws.shape[1] not in (self.trunc, self.trunc + 1):
            raise ValueError(f"draw dimension {self.draws.shape[1]} incompatible with trunc {self.trunc}")
        if self.source not in SOURCES:
            raise ValueError(f"unknown batch source {self.source!r}")
        if self.log_weights is not None:
            self.log_weights = np.asarray(self.log_weights, dtype=float)
            if self.log_weights.shape != (self.draws.shape[0],):
                raise ValueError("log_weights must have one entry per draw")

    def __len__(self):
        return self.draws.shape[0]

    @property
    def hierarchical(self) -> bool:
        return self.draws.shape[1] == self.trunc + 1

    @property
    def coefficients(self) -> np.ndarray:
        """The ``u`` part of every draw, shape ``(K, trunc)``."""
        return self.draws[:, : self.trunc]

    def state(self, i: int) -> CoeffVec | HierState:
        row = self.draws[i]
        if self.hierarchical:
            return HierState.from_flat(row)
        return CoeffVec(row, self.trunc)

    @property
    def weights(self) -> np.ndarray | None:
        if self.log_weights is None:
            return None
        top = np.max(self.log_weights)
        if not np.isfinite(top):
            # all weights zero (or an infinite log-weight): no valid normalization
            return np.full(len(self), np.nan)
        w = np.exp(self.log_weights - top)
        return w / w.sum()

    @property
    def ess(self) -> float:
        w = self.weights
        if w is None:
            return float(len(self))
        return float(1.0 / np.sum(w**2))

    def estimate(self, values) -> MCEstimate:
        """Mean of per-draw ``values`` under the batch's measure, with its standard error."""
        f = np.asarray(values, dtype=float)
        if f.shape[0] != len(self):
            raise ValueError(f"{f.shape[0]} values for {len(self)} draws")
        w = self.weights
        if w is not None:
            mean = np.tensordot(w, f, axes=1)
            dev = f - mean
            se = np.sqrt(np.tensordot(w**2, dev**2, axes=1))
            if len(self) < 2:
                se = np.full_like(np.asarray(mean, dtype=float), np.inf)
            return MCEstimate(_scalar(mean), _scalar(se))
        mean = f.mean(axis=0)
        if len(self) < 2:
            return MCEstimate(_scalar(mean), _scalar(np.full_like(np.asarray(mean, dtype=float), np.inf)))
        if self.source == "rw-metropolis":
            n_chains = int(self.meta.get("n_chains", 1))
            if f.ndim == 1:
                se = batch_means_stderr(f, n_chains)
            else:
                se = np.array([batch_means_stderr(col, n_chains) for col in f.T])
        else:
            se = f.std(axis=0, ddof=1) / np.sqrt(len(self))
        return MCEstimate(_scalar(mean), _scalar(se))


def _scalar(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x
