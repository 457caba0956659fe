import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from wmap_lab.priors import (
    BesovPrior,
    GaussianDiagPrior,
    HierarchicalPrior,
    fisher_information,
    gen_gaussian_log_norm,
    gen_gaussian_sample,
    j_grad_dir,
    j_value,
    log_density,
    log_deriv_prior,
    sample_prior,
)
from wmap_lab.seqspace import BesovWeights, CoeffVec, HierState, TruncationError

from conftest import FAMILIES, make_prior


def quad_normalizer(p):
    """1 / int exp(-|x|^p) dx by adaptive quadrature, independent of the Gamma closed form."""
    f = lambda x: np.exp(-(x**p))
    half = integrate.quad(f, 0, 1, epsabs=1e-14, epsrel=1e-13)[0] + integrate.quad(f, 1, np.inf, epsabs=1e-14)[0]
    return 1.0 / (2 * half)


class TestGeneralizedGaussian:
    @pytest.mark.parametrize("p", [1.1, 1.2, 1.5, 1.8, 2.0])
    def test_log_norm_matches_quadrature(self, p):
        assert gen_gaussian_log_norm(p) == pytest.approx(np.log(quad_normalizer(p)), abs=1e-12)

    def test_gaussian_case(self):
        assert gen_gaussian_log_norm(2.0) == pytest.approx(-0.5 * np.log(np.pi), abs=1e-15)

    def test_p2_variance_is_one_half(self):
        x = gen_gaussian_sample(np.random.default_rng(0), 2.0, 100_000)
        assert x.var() == pytest.approx(0.5, abs=0.02)

    @pytest.mark.parametrize("p", [1.2, 1.5, 2.0])
    def test_moment_of_order_p(self, p):
        # E|X|^p = 1/p; the reference value is itself recomputed by quadrature
        ref = quad_normalizer(p) * 2 * integrate.quad(lambda x: x**p * np.exp(-(x**p)), 0, np.inf)[0]
        assert ref == pytest.approx(1 / p, rel=1e-10)
        v = np.abs(gen_gaussian_sample(np.random.default_rng(1), p, 100_000)) ** p
        assert abs(v.mean() - ref) <= 3 * v.std(ddof=1) / np.sqrt(v.size)

    def test_symmetric(self):
        x = gen_gaussian_sample(np.random.default_rng(2), 1.3, 100_000)
        assert abs(x.mean()) < 4 * x.std() / np.sqrt(x.size)


class TestFisherInformation:
    def test_gaussian_value(self):
        assert fisher_information(2.0) == pytest.approx(2.0, abs=1e-8)

    @pytest.mark.parametrize("p", [1.2, 1.5, 1.8, 2.0])
    def test_matches_curvature_integral(self, p):
        # integration by parts: E[(log pi)'^2] = E[-(log pi)''] = E[p (p-1) |t|^(p-2)]
        sigma = quad_normalizer(p)
        near = integrate.quad(lambda t: np.exp(-(t**p)), 0, 1, weight="alg", wvar=(p - 2, 0))[0]
        far = integrate.quad(lambda t: t ** (p - 2) * np.exp(-(t**p)), 1, np.inf, epsabs=1e-14)[0]
        ref = 2 * sigma * p * (p - 1) * (near + far)
        assert fisher_information(p) == pytest.approx(ref, abs=1e-8)

    @pytest.mark.parametrize("p", [1.3, 1.7, 2.0])
    def test_closed_form_is_twice_the_single_factor_formula(self, p):
        from scipy.special import gamma

        sigma = p / (2 * gamma(1 / p))
        assert fisher_information(p) == pytest.approx(2 * p * sigma * gamma(2 - 1 / p), rel=1e-10)

    @pytest.mark.parametrize("p", [1.0, 2.5])
    def test_domain(self, p):
        with pytest.raises(ValueError):
            fisher_information(p)


class TestLogDensity:
    def test_white_noise_at_zero(self):
        assert log_density(GaussianDiagPrior.white(1), CoeffVec([0.0], 1)) == pytest.approx(-0.9189385, abs=1e-7)

    def test_besov_p2_at_zero(self):
        prior = BesovPrior(BesovWeights(1.0, 2.0, 1), 1)
        assert log_density(prior, CoeffVec([0.0], 1)) == pytest.approx(-0.5 * np.log(np.pi), abs=1e-12)

    @pytest.mark.parametrize("s,p", [(1.0, 1.5), (1.5, 1.2), (0.5, 2.0)])
    def test_besov_density_integrates_to_one(self, s, p):
        prior = BesovPrior(BesovWeights(s, p, 1), 2)
        f = lambda y, x: np.exp(log_density(prior, CoeffVec([x, y], 2)))
        a = prior.scales
        total, _ = integrate.dblquad(f, -12 * a[0], 12 * a[0], -12 * a[1], 12 * a[1], epsabs=1e-10)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_hierarchical_density_integrates_to_one(self):
        prior = HierarchicalPrior([2.0], [1.5], rho_variance=0.7)
        f = lambda t, x: np.exp(log_density(prior, HierState(CoeffVec([x], 1), t)))
        total, _ = integrate.dblquad(f, -15, 15, -15, 15, epsabs=1e-10)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_truncation_mismatch(self):
        with pytest.raises(TruncationError):
            log_density(GaussianDiagPrior.white(3), CoeffVec([0.0, 0.0], 2))

    def test_hierarchical_rejects_bare_coefficients(self):
        with pytest.raises(TypeError):
            log_density(HierarchicalPrior([1.0], [1.0]), CoeffVec([0.0], 1))

    def test_gaussian_rejects_hier_state(self):
        with pytest.raises(TypeError):
            log_density(GaussianDiagPrior.white(1), HierState(CoeffVec([0.0], 1), 0.0))


class TestLogDerivative:
    def test_gaussian_example(self):
        prior = GaussianDiagPrior([1.0, 2.0])
        assert log_deriv_prior(prior, CoeffVec([1.0, 1.0], 2), CoeffVec([1.0, 0.0], 2)) == -1.0

    def test_hierarchical_example_vanishes_on_the_mean_line(self):
        prior = HierarchicalPrior([1.0], [1.0], rho_variance=1.0)
        u = HierState(CoeffVec([1.0], 1), 1.0)
        assert log_deriv_prior(prior, u, HierState(CoeffVec([1.0], 1), 0.0)) == 0.0

    def test_hierarchical_t_direction(self):
        # d/dt of -(u - t e)^2 q / 2 - t^2 / (2 rho) at u=0, t=1, q=e=rho=1 is -2
        prior = HierarchicalPrior([1.0], [1.0], rho_variance=1.0)
        u = HierState(CoeffVec([0.0], 1), 1.0)
        assert log_deriv_prior(prior, u, HierState(CoeffVec([0.0], 1), 1.0)) == pytest.approx(-2.0)

    def test_besov_at_zero_vanishes(self):
        prior = BesovPrior(BesovWeights(1.5, 1.5, 1), 4)
        assert log_deriv_prior(prior, CoeffVec.zeros(4), CoeffVec([1.0, -2.0, 3.0, 0.5], 4)) == 0.0

    @pytest.mark.parametrize("family", FAMILIES)
    def test_linear_in_direction(self, family, rng):
        prior = make_prior(family, 5, rng)
        x = prior.scales * rng.standard_normal(prior.dim)
        h, k = rng.standard_normal((2, prior.dim))
        lhs = prior.log_deriv_flat(x, 2.0 * h - 3.0 * k)
        rhs = 2.0 * prior.log_deriv_flat(x, h) - 3.0 * prior.log_deriv_flat(x, k)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)

    @pytest.mark.parametrize("family", FAMILIES)
    def test_finite_difference(self, family, rng):
        prior = make_prior(family, 6, rng)
        for _ in range(50):
            x = prior.scales * rng.standard_normal(prior.dim)
            h = rng.standard_normal(prior.dim)
            t = 1e-6
            fd = (prior.log_density_flat(x + t * h) - prior.log_density_flat(x - t * h)) / (2 * t)
            beta = prior.log_deriv_flat(x, h)
            assert abs(beta - fd) <= max(1e-6, 1e-4 * abs(beta))

    @pytest.mark.parametrize("family", FAMILIES)
    def test_j_grad_is_minus_beta(self, family, rng):
        prior = make_prior(family, 3, rng)
        x, h = rng.standard_normal((2, prior.dim))
        u, d = prior.from_flat(x), prior.from_flat(h)
        assert j_grad_dir(prior, u, d) == -log_deriv_prior(prior, u, d)
        assert j_value(prior, u) == pytest.approx(prior.log_norm - log_density(prior, u))


class TestConvexity:
    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from(FAMILIES), st.floats(0.0, 1.0))
    def test_midpoint_log_concavity(self, seed, family, lam):
        rng = np.random.default_rng(seed)
        prior = make_prior(family, 4, rng)
        x, y = 3 * prior.scales * rng.standard_normal((2, prior.dim))
        mix = prior.log_density_flat(lam * x + (1 - lam) * y)
        assert mix >= lam * prior.log_density_flat(x) + (1 - lam) * prior.log_density_flat(y) - 1e-9


class TestBesovContinuity:
    @pytest.mark.parametrize("p", [1.2, 1.5, 2.0])
    def test_beta_difference_bound(self, p, rng):
        # |beta_h(u) - beta_h(v)| <= 2 C (sum w |u - v|^p)^((p-1)/p) |h| with C = p
        # from |sign(a)|a|^(p-1) - sign(b)|b|^(p-1)| <= 2^(2-p) |a - b|^(p-1) <= 2 |a - b|^(p-1)
        prior = BesovPrior(BesovWeights(1.0, p, 1), 8)
        w = prior.wts.norm_weights(8)
        for _ in range(200):
            x, y = 2 * prior.scales * rng.standard_normal((2, 8))
            h = rng.standard_normal(8)
            lhs = abs(prior.log_deriv_flat(x, h) - prior.log_deriv_flat(y, h))
            hnorm = np.sum(w * np.abs(h) ** p) ** (1 / p)
            rhs = 2 * p * np.sum(w * np.abs(x - y) ** p) ** ((p - 1) / p) * hnorm
            assert lhs <= rhs * (1 + 1e-12)

    def test_j_convex(self, rng):
        prior = BesovPrior(BesovWeights(1.5, 1.5, 1), 6)
        for _ in range(200):
            x, y = 2 * prior.scales * rng.standard_normal((2, 6))
            t = rng.random()
            assert prior.J_flat(t * x + (1 - t) * y) <= t * prior.J_flat(x) + (1 - t) * prior.J_flat(y) + 1e-12


class TestSamplePrior:
    def test_deterministic(self):
        prior = BesovPrior(BesovWeights(1.5, 1.5, 1), 4)
        a = sample_prior(prior, 4, seed=7, count=1000)
        b = sample_prior(prior, 4, seed=7, count=1000)
        np.testing.assert_array_equal(a.draws, b.draws)
        assert a.source == "direct-prior" and a.seed == 7

    def test_independent_of_thread_count(self, monkeypatch):
        prior = GaussianDiagPrior([1.0, 4.0])
        monkeypatch.setenv("WMAP_LAB_THREADS", "1")
        a = sample_prior(prior, 2, seed=3, count=200_000).draws
        monkeypatch.setenv("WMAP_LAB_THREADS", "4")
        b = sample_prior(prior, 2, seed=3, count=200_000).draws
        np.testing.assert_array_equal(a, b)

    def test_besov_retruncates(self):
        prior = BesovPrior(BesovWeights(1.5, 1.5, 1), 4)
        assert sample_prior(prior, 8, seed=0, count=10).draws.shape == (10, 8)

    def test_gaussian_truncation_mismatch(self):
        with pytest.raises(TruncationError):
            sample_prior(GaussianDiagPrior.white(2), 3, seed=0, count=10)

    def test_gaussian_covariance(self):
        q = np.array([1.0, 4.0, 0.25])
        draws = sample_prior(GaussianDiagPrior(q), 3, seed=11, count=200_000).draws
        np.testing.assert_allclose(draws.var(axis=0), 1 / q, rtol=0.02)

    def test_besov_coordinate_scale(self):
        # coordinate l is a_l times a standard generalized Gaussian draw
        w = BesovWeights(1.5, 1.5, 1)
        draws = sample_prior(BesovPrior(w, 3), 3, seed=5, count=200_000).draws
        moments = np.mean(np.abs(draws / w.scales(3)) ** 1.5, axis=0)
        np.testing.assert_allclose(moments, 1 / 1.5, rtol=0.02)

    def test_hierarchical_moments(self):
        # t ~ N(0, rho); u | t ~ N(t e, diag(1/q))
        prior = HierarchicalPrior([1.0, 2.0], [1.0, -0.5], rho_variance=2.0)
        draws = sample_prior(prior, 2, seed=9, count=200_000).draws
        cov = np.cov(draws.T)
        e = np.array([1.0, -0.5])
        expected = np.zeros((3, 3))
        expected[:2, :2] = np.diag([1.0, 0.5]) + 2.0 * np.outer(e, e)
        expected[:2, 2] = expected[2, :2] = 2.0 * e
        expected[2, 2] = 2.0
        np.testing.assert_allclose(cov, expected, atol=0.03)

    def test_count_must_be_positive(self):
        with pytest.raises(ValueError):
            sample_prior(GaussianDiagPrior.white(2), 2, seed=0, count=0)

    def test_besov_p2_variance(self):
        w = BesovWeights(1.0, 2.0, 1)
        draws = sample_prior(BesovPrior(w, 3), 3, seed=4, count=100_000).draws
        assert draws[:, 0].var() == pytest.approx(0.5, abs=0.02)
        np.testing.assert_allclose(draws.var(axis=0), w.scales(3) ** 2 / 2, rtol=0.03)

    def test_besov_mean_zero(self):
        draws = sample_prior(BesovPrior(BesovWeights(1.5, 1.2, 1), 5), 5, seed=6, count=100_000).draws
        z = draws.mean(axis=0) / (draws.std(axis=0, ddof=1) / np.sqrt(len(draws)))
        assert np.all(np.abs(z) < 4)
