import numpy as np
import pytest

from wmap_lab.bregman import (
    bayes_cost_G,
    bayes_cost_terms,
    bregman,
    bregman_hom,
    bregman_hom_batch,
    compare_map_cm,
)
from wmap_lab.posterior import PosteriorModel, cm_estimate, sample_posterior_is
from wmap_lab.priors import BesovPrior, GaussianDiagPrior
from wmap_lab.problems import builtin_problem
from wmap_lab.sampling import SampleBatch
from wmap_lab.seqspace import BesovWeights, CoeffVec
from wmap_lab.solvers import solve_wmap

from conftest import FAMILIES, make_prior

WHITE1 = GaussianDiagPrior.white(1)


class TestBregman:
    def test_same_point(self, rng):
        for family in FAMILIES:
            prior = make_prior(family, 3, rng)
            x = rng.standard_normal(prior.dim)
            assert bregman(prior, x, x) == 0.0

    def test_white_noise_value(self):
        assert bregman(WHITE1, CoeffVec([2.0], 1), CoeffVec([0.0], 1)) == 2.0

    @pytest.mark.parametrize("family", FAMILIES)
    def test_non_negative(self, family, rng):
        prior = make_prior(family, 5, rng)
        for _ in range(200):
            x, y = 2 * prior.scales * rng.standard_normal((2, prior.dim))
            assert bregman(prior, x, y) >= -1e-12

    def test_accepts_posterior(self):
        post = builtin_problem("gauss-1d")
        assert bregman(post, [2.0], [0.0]) == 2.0


class TestHomogeneousBregman:
    @pytest.mark.parametrize("family", FAMILIES)
    def test_offset_depends_on_v_only(self, family, rng):
        prior = make_prior(family, 4, rng)
        for _ in range(50):
            u1, u2, v = prior.scales * rng.standard_normal((3, prior.dim))
            lhs = bregman_hom(prior, u1, v) - bregman(prior, u1, v)
            rhs = bregman_hom(prior, u2, v) - bregman(prior, u2, v)
            assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)

    @pytest.mark.parametrize("p", [1.2, 1.5, 2.0])
    def test_besov_euler_relation(self, p, rng):
        # D~ - D = J(v) - J'(v) v and J'(v) v = p J(v) for p-homogeneous J
        prior = BesovPrior(BesovWeights(1.0, p, 1), 6)
        for _ in range(50):
            u, v = prior.scales * rng.standard_normal((2, 6))
            expected = bregman(prior, u, v) - (p - 1) * prior.J_flat(v)
            assert bregman_hom(prior, u, v) == pytest.approx(expected, rel=1e-10, abs=1e-12)

    @pytest.mark.parametrize("family", FAMILIES)
    def test_zero_first_argument(self, family, rng):
        prior = make_prior(family, 3, rng)
        assert bregman_hom(prior, np.zeros(prior.dim), rng.standard_normal(prior.dim)) == 0.0

    def test_can_be_negative(self):
        # J(u) - J'(v) u with u = v = 1: 1/2 - 1
        assert bregman_hom(WHITE1, [1.0], [1.0]) == -0.5

    def test_batch_matches_pointwise(self, rng):
        prior = BesovPrior(BesovWeights(1.5, 1.5, 1), 4)
        u = rng.standard_normal(4)
        draws = rng.standard_normal((7, 4))
        expected = [bregman_hom(prior, u, v) for v in draws]
        np.testing.assert_allclose(bregman_hom_batch(prior, u, draws), expected, rtol=1e-13)


def _paired_offset(post, batch, u1, u2):
    """(G(u1) - G(u2)) - (F(u1) - F(u2)) on a shared batch, with its paired stderr."""
    diff = batch.estimate(bayes_cost_terms(post, u1, batch) - bayes_cost_terms(post, u2, batch))
    gap = diff.estimate - (post.objective_flat(post.to_flat(u1)) - post.objective_flat(post.to_flat(u2)))
    return gap, diff.stderr


class TestBayesCost:
    def test_zero_operator_at_zero(self):
        prior = BesovPrior(BesovWeights(1.5, 1.5, 1), 3)
        post = PosteriorModel(prior, np.zeros((2, 3)), [1.0, 2.0])
        batch = sample_posterior_is(post, seed=0, count=1000)
        est = bayes_cost_G(post, np.zeros(3), batch)
        assert est.estimate == 0.0

    def test_empty_batch_is_impossible(self):
        with pytest.raises(ValueError):
            SampleBatch(np.zeros((0, 1)), 1, 0, "direct-prior")

    @pytest.mark.parametrize("name,trunc", [("gauss-random", 4), ("hier-random", 3), ("smoothing", 16)])
    def test_constant_offset(self, name, trunc):
        post = builtin_problem(name, trunc=trunc)
        batch = sample_posterior_is(post, seed=2, count=100_000)
        rng = np.random.default_rng(3)
        for _ in range(10):
            u1, u2 = 0.5 * post.prior.scales * rng.standard_normal((2, post.dim))
            gap, se = _paired_offset(post, batch, u1, u2)
            assert abs(gap) <= 3 * se

    @pytest.mark.parametrize(
        "prior", [GaussianDiagPrior.white(1), BesovPrior(BesovWeights(1.5, 1.5, 1), 1)], ids=["gauss", "besov"]
    )
    def test_grid_argmin_matches_solver(self, prior):
        post = PosteriorModel(prior, [[1.0]], [2.0])
        batch = sample_posterior_is(post, seed=4, count=100_000)
        grid = np.arange(-1.0, 3.0, 0.01)
        costs = [bayes_cost_G(post, [g], batch).estimate for g in grid]
        u_hat = solve_wmap(post).argmin.entries[0]
        assert abs(grid[int(np.argmin(costs))] - u_hat) <= 0.01 + 1e-12


class TestZeroMeanDerivative:
    @pytest.mark.parametrize("name,trunc", [("gauss-random", 4), ("hier-random", 3), ("smoothing", 32)])
    def test_average_vanishes(self, name, trunc):
        post = builtin_problem(name, trunc=trunc, seed=5)
        batch = sample_posterior_is(post, seed=6, count=100_000)
        H = np.random.default_rng(7).standard_normal((10, post.dim))
        betas = post.log_deriv_flat(batch.draws, H.T)
        est = batch.estimate(betas)
        assert np.all(np.abs(est.estimate) <= 3 * est.stderr)


class TestCompareMapCm:
    def test_gaussian_costs_agree(self):
        post = builtin_problem("gauss-random", trunc=4, seed=2)
        batch = sample_posterior_is(post, seed=1, count=100_000)
        report = compare_map_cm(post, solve_wmap(post).argmin, cm_estimate(batch), batch)
        assert abs(report.difference.estimate) <= 3 * report.difference.stderr
        assert report.shared_seed == 1 and report.n_samples == 100_000

    def test_besov_verdict(self):
        post = builtin_problem("smoothing", trunc=16)
        batch = sample_posterior_is(post, seed=0, count=100_000)
        report = compare_map_cm(post, solve_wmap(post).argmin, cm_estimate(batch), batch)
        assert report.verdict == "map-leq-cm"
        assert report.cost_at_map.estimate <= report.cost_at_cm.estimate

    def test_single_sample_is_inconclusive(self):
        post = builtin_problem("gauss-1d")
        batch = sample_posterior_is(post, seed=0, count=1)
        report = compare_map_cm(post, [1.0], [0.5], batch)
        assert report.verdict == "inconclusive"
