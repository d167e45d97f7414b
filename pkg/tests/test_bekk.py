import unittest

import numpy as np

from volrec.bekk import (
    fbekk_filter,
    fbekk_forecast,
    initial_covariance,
    sbekk_filter,
    sbekk_fit,
    sbekk_forecast,
)
from volrec.errors import EstimationFailure, InvalidInput
from volrec.evaluation import portfolio_variance
from volrec.params import FBekkParams, SBekkParams
from volrec.simulation import simulate, unconditional_covariance


def _intercept_factor():
    return np.linalg.cholesky(np.array([[0.05, 0.01, 0.0], [0.01, 0.04, 0.005], [0.0, 0.005, 0.03]]))


class ScalarBekkFilterTests(unittest.TestCase):
    def setUp(self):
        self.params = SBekkParams(_intercept_factor(), 0.05, 0.90)
        self.returns = np.random.default_rng(3).standard_normal((30, 3))

    def test_filter_follows_recursion(self):
        init = initial_covariance(self.returns)
        out = sbekk_filter(self.params, self.returns, init)
        sigma = init
        for t in range(len(self.returns)):
            np.testing.assert_allclose(out.sigma_path[t], sigma, rtol=1e-12)
            r = self.returns[t]
            sigma = self.params.intercept + 0.05 * np.outer(r, r) + 0.90 * sigma
        np.testing.assert_allclose(out.next_sigma, sigma, rtol=1e-12)

    def test_full_bekk_with_scalar_matrices_matches_scalar_filter(self):
        full = FBekkParams(_intercept_factor(), np.sqrt(0.05) * np.eye(3), np.sqrt(0.90) * np.eye(3))
        init = initial_covariance(self.returns)
        scalar = sbekk_filter(self.params, self.returns, init)
        out = fbekk_filter(full, self.returns, init)
        np.testing.assert_allclose(out.sigma_path, scalar.sigma_path, rtol=1e-10)
        self.assertAlmostEqual(out.loglik, scalar.loglik, places=8)

    def test_filter_rejects_indefinite_start(self):
        with self.assertRaises(InvalidInput):
            sbekk_filter(self.params, self.returns, np.diag([1.0, -1.0, 1.0]))

    def test_long_horizon_forecast_reverts_to_unconditional(self):
        out = sbekk_forecast(self.params, self.returns[-1], np.eye(3), 3000)
        np.testing.assert_allclose(out, unconditional_covariance(self.params), rtol=1e-8)

    def test_full_bekk_one_step_forecast_matches_filter(self):
        full = FBekkParams(_intercept_factor(), 0.2 * np.eye(3), 0.95 * np.eye(3))
        init = initial_covariance(self.returns)
        out = fbekk_filter(full, self.returns, init)
        forecast = fbekk_forecast(full, self.returns[-1], out.sigma_path[-1], 1)
        np.testing.assert_allclose(forecast, out.next_sigma, rtol=1e-12)

    def test_portfolio_variance_follows_a_univariate_garch(self):
        weights = np.array([0.5, 0.3, 0.2])
        returns, cov_path = simulate(self.params, 10_000, 21)
        portfolio = returns @ weights
        target = portfolio_variance(cov_path, weights)
        intercept = weights @ self.params.intercept @ weights
        value = target[0]
        for t in range(1, len(target)):
            value = intercept + 0.05 * portfolio[t - 1] ** 2 + 0.90 * value
            self.assertAlmostEqual(value, target[t], delta=1e-10 * max(1.0, abs(target[t])))


class ScalarBekkFitTests(unittest.TestCase):
    def test_fit_recovers_dynamics(self):
        truth = SBekkParams(_intercept_factor(), 0.05, 0.92)
        returns, _ = simulate(truth, 4000, 5)
        fitted = sbekk_fit(returns)
        self.assertAlmostEqual(fitted.alpha, 0.05, delta=0.03)
        self.assertAlmostEqual(fitted.beta, 0.92, delta=0.05)
        np.testing.assert_allclose(fitted.intercept, fitted.intercept.T)

    def test_fit_rejects_short_sample(self):
        with self.assertRaises(InvalidInput):
            sbekk_fit(np.ones((20, 2)))

    def test_fit_on_zero_column_is_an_estimation_failure(self):
        returns = np.random.default_rng(8).standard_normal((200, 2))
        returns[:, 1] = 0.0
        with self.assertRaises(EstimationFailure) as ctx:
            sbekk_fit(returns)
        self.assertEqual(ctx.exception.stage, "sbekk")


if __name__ == "__main__":
    unittest.main()
