import numpy as np
import pytest

from aida.dists import (
    Bernoulli,
    Categorical,
    DegenerateDistributionError,
    DimensionMismatchError,
    DirichletCols,
    Gamma,
    Gaussian,
    SingularPrecisionError,
    derive_rng,
    entropy,
    gamma_kl,
    gaussian_kl,
    gaussian_multiply,
    sample,
)


def g1(mean, var):
    return Gaussian([mean], [[var]])


class TestGaussianMultiply:
    def test_standard_product_identity(self):
        prod, log_scale = gaussian_multiply(g1(0.0, 1.0), g1(0.0, 1.0))
        assert prod.mean[0] == pytest.approx(0.0, abs=1e-12)
        assert prod.cov[0, 0] == pytest.approx(0.5, rel=1e-9)
        assert log_scale == pytest.approx(-0.5 * np.log(4 * np.pi), abs=1e-9)

    def test_uninformative_is_identity(self):
        a = Gaussian([1.0, -2.0], [[2.0, 0.3], [0.3, 1.0]])
        prod, log_scale = gaussian_multiply(a, Gaussian.uninformative(2))
        np.testing.assert_allclose(prod.mean, a.mean, atol=1e-10)
        np.testing.assert_allclose(prod.cov, a.cov, atol=1e-8)
        assert log_scale == pytest.approx(0.0, abs=1e-9)

    def test_against_quadrature(self):
        # oracle: trapezoid quadrature of the pointwise product on a dense grid
        x = np.linspace(-30.0, 30.0, 400001)

        def npdf(x, m, v):
            return np.exp(-0.5 * (x - m) ** 2 / v) / np.sqrt(2 * np.pi * v)

        f = npdf(x, 1.0, 2.0) * npdf(x, 3.0, 4.0)
        scale = np.trapezoid(f, x)
        mean = np.trapezoid(x * f, x) / scale
        var = np.trapezoid((x - mean) ** 2 * f, x) / scale

        prod, log_scale = gaussian_multiply(g1(1.0, 2.0), g1(3.0, 4.0))
        assert prod.mean[0] == pytest.approx(mean, abs=1e-6)
        assert prod.cov[0, 0] == pytest.approx(var, abs=1e-6)
        assert log_scale == pytest.approx(np.log(scale), abs=1e-6)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            gaussian_multiply(g1(0, 1), Gaussian.uninformative(2))

    def test_singular_combined_precision(self):
        with pytest.raises(SingularPrecisionError):
            gaussian_multiply(Gaussian.uninformative(1), Gaussian.uninformative(1))


class TestEntropy:
    def test_standard_normal(self):
        assert entropy(g1(0.0, 1.0)) == pytest.approx(0.5 * np.log(2 * np.pi * np.e), abs=1e-12)

    def test_deterministic_categorical(self):
        assert entropy(Categorical(np.array([1.0, 0.0, 0.0]))) == 0.0

    def test_gamma_against_monte_carlo(self):
        # oracle: 1e6-sample Monte-Carlo estimate of -E[ln p]
        dist = Gamma(2.0, 3.0)
        rng = np.random.default_rng(20240817)
        xs = rng.gamma(dist.shape, 1.0 / dist.rate, size=1_000_000)
        from scipy.special import gammaln

        logp = (
            dist.shape * np.log(dist.rate)
            - gammaln(dist.shape)
            + (dist.shape - 1) * np.log(xs)
            - dist.rate * xs
        )
        assert entropy(dist) == pytest.approx(-logp.mean(), abs=1e-2)

    def test_degenerate_covariance_raises(self):
        g = Gaussian([0.0, 0.0], np.zeros((2, 2)))
        with pytest.raises(DegenerateDistributionError):
            entropy(g)


class TestSample:
    def test_near_point_mass_gaussian(self):
        rng = derive_rng(1, 2)
        x = sample(Gaussian([5.0], [[0.0]]), rng)
        assert x[0] == pytest.approx(5.0, abs=1e-4)

    def test_categorical_frequencies(self):
        dist = Categorical(np.full(4, 0.25))
        rng = derive_rng(7)
        draws = np.array([sample(dist, rng) for _ in range(100_000)])
        freqs = np.bincount(draws, minlength=4) / draws.size
        # binomial CI: 0.25 +/- 0.005 covers ~3.6 standard errors
        np.testing.assert_allclose(freqs, 0.25, atol=0.005)

    def test_seed_replay(self):
        dist = Gaussian([0.0, 1.0], np.eye(2))
        a = [sample(dist, derive_rng(3, i)) for i in range(5)]
        b = [sample(dist, derive_rng(3, i)) for i in range(5)]
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_moments_match(self):
        rng = derive_rng(11)
        dist = Gamma(3.0, 2.0)
        xs = np.array([sample(dist, rng) for _ in range(100_000)])
        se = np.sqrt(dist.shape / dist.rate**2 / xs.size)
        assert abs(xs.mean() - dist.mean) < 3 * se

    def test_dirichlet_cols_stochastic(self):
        d = DirichletCols(np.ones((3, 3)))
        t = sample(d, derive_rng(5))
        np.testing.assert_allclose(t.sum(axis=0), 1.0, atol=1e-12)


class TestValidation:
    def test_gamma_domain(self):
        with pytest.raises(DegenerateDistributionError):
            Gamma(0.0, 1.0)
        with pytest.raises(DegenerateDistributionError):
            Gamma(1.0, -1.0)

    def test_categorical_simplex(self):
        with pytest.raises(DegenerateDistributionError):
            Categorical(np.array([0.5, 0.6]))

    def test_bernoulli_domain(self):
        with pytest.raises(DegenerateDistributionError):
            Bernoulli(1.5)

    def test_gaussian_asymmetric_cov(self):
        with pytest.raises(DegenerateDistributionError):
            Gaussian([0.0, 0.0], [[1.0, 0.5], [0.2, 1.0]])

    def test_dirichlet_positive(self):
        with pytest.raises(DegenerateDistributionError):
            DirichletCols(np.array([[1.0, 0.0], [1.0, 1.0]]))


class TestKl:
    def test_gamma_kl_self_zero(self):
        assert gamma_kl(Gamma(2.5, 1.5), Gamma(2.5, 1.5)) == pytest.approx(0.0, abs=1e-12)

    def test_gamma_kl_monte_carlo(self):
        q, p = Gamma(4.0, 2.0), Gamma(1.0, 1.0)
        rng = np.random.default_rng(99)
        xs = rng.gamma(q.shape, 1.0 / q.rate, size=500_000)

        from scipy.special import gammaln

        def logpdf(x, d):
            return d.shape * np.log(d.rate) + (d.shape - 1) * np.log(x) - d.rate * x - gammaln(d.shape)

        mc = (logpdf(xs, q) - logpdf(xs, p)).mean()
        assert gamma_kl(q, p) == pytest.approx(mc, abs=2e-2)

    def test_gaussian_kl_self_zero(self):
        g = Gaussian([1.0, 2.0], [[1.0, 0.2], [0.2, 2.0]])
        assert gaussian_kl(g, g) == pytest.approx(0.0, abs=1e-9)


class TestPrecisionForm:
    def test_roundtrip(self):
        g = Gaussian([1.0, -1.0], [[2.0, 0.5], [0.5, 1.0]])
        back = Gaussian.from_info(g.precision, g.precision_mean)
        np.testing.assert_allclose(back.mean, g.mean, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(back.cov, g.cov, rtol=1e-7, atol=1e-12)
