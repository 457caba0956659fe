"""Built-in test problems and loading of user-supplied ``A`` and ``m``.

``smoothing`` is nested in the truncation: column ``l`` of ``A`` and the noise
vector come from their own seeded streams, so the problem at ``N`` is the
restriction of the problem at any ``N' > N``.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .posterior import ForwardOperator, PosteriorModel
from .priors import BesovPrior, GaussianDiagPrior, HierarchicalPrior, PriorModel
from .seqspace import BesovWeights

__all__ = [
    "BUILTIN_PROBLEMS",
    "SMOOTHING_TRUTH",
    "builtin_problem",
    "load_problem",
    "read_problem_files",
    "whitened_problem",
    "smoothing_truth",
]

# ground truth of "smoothing": 1/l at these indices, zero elsewhere
SMOOTHING_TRUTH = (1, 2, 3, 5, 8)


def smoothing_truth(trunc: int) -> np.ndarray:
    u = np.zeros(trunc)
    for ell in SMOOTHING_TRUTH:
        if ell <= trunc:
            u[ell - 1] = 1.0 / ell
    return u


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), *key])


def _check_prior(prior: PriorModel, trunc: int) -> PriorModel:
    if prior.trunc != trunc:
        raise ValueError(f"prior truncation {prior.trunc} does not match problem truncation {trunc}")
    return prior


def _gauss_1d(trunc, seed, prior, m=2.0):
    if trunc not in (None, 1):
        raise ValueError("gauss-1d has truncation 1")
    prior = _check_prior(prior, 1) if prior else GaussianDiagPrior.white(1)
    return PosteriorModel(prior, ForwardOperator([[1.0]]), [m])


def _hier_1d(trunc, seed, prior, m=3.0):
    if trunc not in (None, 1):
        raise ValueError("hier-1d has truncation 1")
    prior = _check_prior(prior, 1) if prior else HierarchicalPrior([1.0], [1.0], rho_variance=1.0)
    return PosteriorModel(prior, ForwardOperator([[1.0]]), [m])


def _smoothing(trunc, seed, prior, M=32, alpha=1.5):
    if trunc is None:
        raise ValueError("smoothing needs an explicit truncation")
    # data uses the first max(SMOOTHING_TRUTH) columns whatever trunc is
    width = max(trunc, max(SMOOTHING_TRUTH))
    ell = np.arange(1, width + 1, dtype=float)
    g = np.column_stack([_rng(seed, 1, k).standard_normal(M) for k in range(1, width + 1)])
    A_full = g * ell ** (-alpha)
    m = A_full @ smoothing_truth(width) + _rng(seed, 0).standard_normal(M)
    A = A_full[:, :trunc]
    prior = _check_prior(prior, trunc) if prior else BesovPrior(BesovWeights(1.5, 1.5, 1), trunc)
    return PosteriorModel(prior, ForwardOperator(A), m)


def _gauss_random(trunc, seed, prior, M=None):
    if trunc is None:
        raise ValueError("gauss-random needs an explicit truncation")
    M = trunc if M is None else M
    rng = _rng(seed, 2)
    A = rng.standard_normal((M, trunc)) / np.sqrt(trunc)
    prior = _check_prior(prior, trunc) if prior else GaussianDiagPrior(1.0 + rng.random(trunc))
    truth = prior.sample_flat(rng, 1)[0]
    m = A @ truth[:trunc] + rng.standard_normal(M)
    return PosteriorModel(prior, ForwardOperator(A), m)


def _hier_random(trunc, seed, prior, M=None, rho_variance=1.0):
    if trunc is None:
        raise ValueError("hier-random needs an explicit truncation")
    M = trunc if M is None else M
    rng = _rng(seed, 3)
    A = rng.standard_normal((M, trunc)) / np.sqrt(trunc)
    if prior is None:
        prior = HierarchicalPrior(1.0 + rng.random(trunc), 1.0 + rng.random(trunc), rho_variance)
    else:
        _check_prior(prior, trunc)
    truth = prior.sample_flat(rng, 1)[0]
    m = A @ truth[:trunc] + rng.standard_normal(M)
    return PosteriorModel(prior, ForwardOperator(A), m)


BUILTIN_PROBLEMS = {
    "gauss-1d": _gauss_1d,
    "hier-1d": _hier_1d,
    "smoothing": _smoothing,
    "gauss-random": _gauss_random,
    "hier-random": _hier_random,
}


def builtin_problem(name: str, trunc: int | None = None, seed: int = 0, prior: PriorModel | None = None, **params):
    """Posterior for a named problem.

    ``gauss-1d``: ``A = [1]``, ``m = 2`` (parameter ``m``), white-noise prior.
    ``hier-1d``: ``A = [1]``, ``m = 3``, hierarchical prior with ``e = (1)``,
    unit weights and unit hyperprior variance.
    ``smoothing``: ``A_kl = l^(-alpha) g_kl`` (``M = 32``, ``alpha = 1.5``),
    data from the fixed truth ``u_l = 1/l`` at ``l in {1, 2, 3, 5, 8}`` plus
    unit noise; default prior ``B^1.5_1.5`` in one dimension.
    ``gauss-random`` / ``hier-random``: seeded random conjugate problems.
    """
    try:
        make = BUILTIN_PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown builtin problem {name!r}; known: {sorted(BUILTIN_PROBLEMS)}") from None
    return make(trunc, seed, prior, **params)


def _read_array(path: Path) -> np.ndarray:
    if path.suffix == ".npy":
        return np.load(path)
    return np.loadtxt(path, delimiter=",", ndmin=1)


def read_problem_files(matrix_file, data_file) -> tuple[np.ndarray, np.ndarray]:
    """``(A, m)`` from CSV (comma-separated) or ``.npy`` files."""
    A = np.atleast_2d(_read_array(Path(matrix_file)).astype(float))
    m = np.asarray(_read_array(Path(data_file)), dtype=float).reshape(-1)
    return A, m


def whitened_problem(prior: PriorModel, A, m, noise_std=None) -> PosteriorModel:
    """Posterior for ``m = A u + e`` with ``e ~ N(0, diag(noise_std^2))``, whitened row-wise."""
    A, m = np.atleast_2d(np.asarray(A, dtype=float)), np.asarray(m, dtype=float).reshape(-1)
    if noise_std is not None:
        sd = np.broadcast_to(np.asarray(noise_std, dtype=float), m.shape)
        if np.any(sd <= 0):
            raise ValueError("noise_std must be positive")
        A, m = A / sd[:, None], m / sd
    return PosteriorModel(prior, ForwardOperator(A), m)


def load_problem(prior: PriorModel, matrix_file, data_file, noise_std=None) -> PosteriorModel:
    """Posterior from CSV (or ``.npy``) files; ``noise_std`` whitens ``A`` and ``m`` row-wise."""
    A, m = read_problem_files(matrix_file, data_file)
    return whitened_problem(prior, A, m, noise_std)
