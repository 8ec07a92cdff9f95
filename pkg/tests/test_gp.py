import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cardpattern.gp import (KernelParams, fit_gp, gram, kernel, log_gamma_prior,
                            log_marginal_likelihood, log_posterior, model_from_params,
                            predict_gp, smooth_gp)


def brute_force_predict(params, y, x_star):
    """Explicit-inverse GP prediction, written from the conditional Gaussian."""
    n = len(y)
    K = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            d = (i + 1) - (j + 1)
            K[i, j] = params.sigma_f ** 2 * math.exp(-d * d / (2 * params.l ** 2)) + (params.sigma_n ** 2 if i == j else 0)
    ks = np.array([params.sigma_f ** 2 * math.exp(-((x_star - (j + 1)) ** 2) / (2 * params.l ** 2))
                   + (params.sigma_n ** 2 if x_star == j + 1 else 0) for j in range(n)])
    Kinv = np.linalg.inv(K)
    return float(ks @ Kinv @ y), float(params.sigma_f ** 2 + params.sigma_n ** 2 - ks @ Kinv @ ks)


class TestKernel:
    def test_same_index(self):
        p = KernelParams(2.0, 1.5, 0.3)
        assert kernel(4, 4, p) == pytest.approx(1.5 ** 2 + 0.3 ** 2)

    def test_unit_distance(self):
        assert kernel(1, 2, KernelParams(1.0, 1.0, 0.0)) == pytest.approx(0.606531, abs=1e-6)

    def test_decays_to_zero(self):
        p = KernelParams(1.5, 1.0, 0.5)
        vals = [kernel(0, d, p) for d in range(1, 40)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 1e-12

    def test_gram_symmetric_exactly(self):
        K = gram(np.arange(1.0, 15.0), KernelParams(2.3, 1.1, 0.2))
        assert np.array_equal(K, K.T)
        assert np.all(np.linalg.eigvalsh(K) > 0)


class TestPosterior:
    def test_posterior_minus_likelihood_is_prior(self):
        rng = np.random.default_rng(0)
        y = rng.normal(size=12)
        x = np.arange(1.0, 13.0)
        for p in (KernelParams(0.7, 1.0, 0.4), KernelParams(5.0, 2.0, 0.1)):
            diff = log_posterior(p, x, y) - log_marginal_likelihood(p, x, y)
            assert abs(diff - log_gamma_prior(p.l)) < 1e-10

    def test_single_point_closed_form(self):
        p = KernelParams(1.3, 0.8, 0.5)
        expected = -0.5 * math.log(0.8 ** 2 + 0.5 ** 2) - 0.5 * math.log(2 * math.pi)
        assert log_marginal_likelihood(p, [1.0], [0.0]) == pytest.approx(expected, abs=1e-12)

    def test_gamma_density_at_two(self):
        assert log_gamma_prior(2.0) == pytest.approx(math.log(2) - 1 - math.log(4), abs=1e-12)

    def test_gamma_density_matches_scipy(self):
        from scipy.stats import gamma
        for l in (0.1, 1.0, 3.7, 20.0):
            assert log_gamma_prior(l) == pytest.approx(gamma.logpdf(l, 2, scale=2), abs=1e-12)

    def test_nonpositive_length_scale_is_impossible(self):
        assert log_gamma_prior(0.0) == -math.inf
        assert log_gamma_prior(-1.0) == -math.inf

    def test_prior_breaks_likelihood_ties(self):
        # a single observation makes the likelihood independent of l
        x, y = [1.0], [0.4]
        a, b = KernelParams(2.0, 1.0, 0.3), KernelParams(50.0, 1.0, 0.3)
        assert log_marginal_likelihood(a, x, y) == log_marginal_likelihood(b, x, y)
        assert log_posterior(a, x, y) > log_posterior(b, x, y)


class TestPredict:
    @pytest.mark.parametrize("seed", range(8))
    def test_matches_explicit_inverse(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 21))
        p = KernelParams(rng.uniform(0.5, 6), rng.uniform(0.3, 3), rng.uniform(0.05, 1))
        y = rng.normal(size=n)
        m = model_from_params(y, p)
        for xs in (n + 1, n + 3.5, 1, n // 2 + 1):
            pred = predict_gp(m, xs)
            e, v = brute_force_predict(p, y, xs)
            assert pred.mean == pytest.approx(e, rel=1e-6, abs=1e-9)
            assert pred.variance == pytest.approx(max(v, 0), rel=1e-6, abs=1e-9)

    def test_noise_free_interpolation(self):
        y = np.array([0.3, -1.2, 2.0, 0.7, 0.1])
        m = model_from_params(y, KernelParams(1.0, 1.0, 0.0))
        for i, yi in enumerate(y, start=1):
            assert predict_gp(m, i).mean == pytest.approx(yi, abs=1e-6)

    def test_single_observation(self):
        p = KernelParams(1.7, 1.2, 0.4)
        m = model_from_params([0.9], p)
        expected = kernel(3.0, 1.0, p) * 0.9 / (1.2 ** 2 + 0.4 ** 2)
        assert predict_gp(m, 3.0).mean == pytest.approx(expected, rel=1e-12)

    def test_far_prediction_reverts_to_prior(self):
        p = KernelParams(1.0, 1.3, 0.2)
        m = model_from_params([2.0, 2.5, 1.5], p)
        pred = predict_gp(m, 500)
        assert abs(pred.mean) < 1e-9
        assert pred.variance == pytest.approx(p.prior_variance)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.2, 10), st.floats(0.1, 3), st.floats(0.0, 1.0),
           st.floats(-5, 30))
    def test_variance_bounded_by_prior(self, seed, l, sf, sn, xs):
        y = np.random.default_rng(seed).normal(size=10)
        p = KernelParams(l, sf, sn)
        try:
            m = model_from_params(y, p)
        except Exception:
            return  # singular without noise
        pred = predict_gp(m, xs)
        assert 0 <= pred.variance <= p.prior_variance + 1e-10

    def test_smooth_variance_includes_noise(self):
        p = KernelParams(2.0, 1.0, 0.5)
        m = model_from_params(np.random.default_rng(1).normal(size=15), p)
        _, var = smooth_gp(m)
        assert np.all(var >= 0.25 - 1e-12)


class TestFit:
    def test_best_beats_every_start(self):
        y = np.random.default_rng(3).normal(1.0, 0.5, size=30)
        m = fit_gp(y, restarts=4, seed=11)
        x = np.arange(1.0, 31.0)
        for l, lsf, lsn in m.metadata["starts"]:
            start = KernelParams(l, math.exp(lsf), math.exp(lsn))
            assert m.log_posterior >= log_posterior(start, x, y) - 1e-12
        assert m.log_posterior == pytest.approx(log_posterior(m.params, x, y), abs=1e-9)

    def test_recovers_noise_level(self):
        s = 0.7
        y = np.random.default_rng(5).normal(0.0, s, size=100)
        m = fit_gp(y, restarts=5, seed=0)
        assert s / 2 <= m.params.sigma_n <= 2 * s

    def test_smooth_signal_has_long_length_scale(self):
        x = np.arange(1.0, 61.0)
        y = np.sin(x / 6.0) + np.random.default_rng(2).normal(0, 0.01, size=60)
        m = fit_gp(y, restarts=5, seed=0)
        assert m.params.l > 1
        indep = KernelParams(0.05, m.params.sigma_f, float(np.std(y)))
        assert log_posterior(m.params, x, y) > log_posterior(indep, x, y)

    def test_deterministic_given_seed(self):
        y = np.random.default_rng(9).normal(size=25)
        a, b = fit_gp(y, 3, seed=4), fit_gp(y, 3, seed=4)
        assert a.params == b.params

    def test_centering_offsets_predictions(self):
        y = 4.0 + np.random.default_rng(6).normal(0, 0.3, size=40)
        m = fit_gp(y, 3, seed=0, center=True)
        assert m.offset == pytest.approx(y.mean())
        assert abs(predict_gp(m, 200).mean - y.mean()) < 1e-6
