import numpy as np
import pytest

from wmap_lab import (
    BesovPrior,
    BesovWeights,
    ForwardOperator,
    GaussianDiagPrior,
    HierarchicalPrior,
    PosteriorModel,
)


def make_prior(family, trunc, rng):
    if family == "gaussian":
        return GaussianDiagPrior(0.5 + rng.random(trunc))
    if family == "besov":
        return BesovPrior(BesovWeights(1.5, 1.5, 1), trunc)
    if family == "besov-1.2":
        return BesovPrior(BesovWeights(1.0, 1.2, 1), trunc)
    if family == "hierarchical":
        return HierarchicalPrior(0.5 + rng.random(trunc), rng.standard_normal(trunc) + 0.1, 0.5 + rng.random())
    raise ValueError(family)


def make_posterior(prior, rng, M=None):
    M = M or max(1, prior.trunc // 2)
    A = rng.standard_normal((M, prior.trunc)) / np.sqrt(prior.trunc)
    return PosteriorModel(prior, ForwardOperator(A), rng.standard_normal(M))


def random_state(model, rng, scale=1.0):
    """A point drawn around the prior's spread (flat array)."""
    return scale * model.prior.scales * rng.standard_normal(model.dim) if hasattr(model, "prior") else (
        scale * model.scales * rng.standard_normal(model.dim)
    )


FAMILIES = ["gaussian", "besov", "besov-1.2", "hierarchical"]


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


# -- acceptance summary ---------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_criterion():
    """Call with ``(number, title, passed, detail)``; lines are printed after the run."""

    def record(number, title, passed, detail=""):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}  {detail}".rstrip()
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
