import os
import unittest

import numpy as np

from volrec.errors import DegenerateVariance, InvalidInput
from volrec.evaluation import (
    MCS_LEVELS,
    LossPanel,
    avg_rel,
    dm_matrix,
    dm_test,
    dm_wins,
    loss_series,
    mcs,
    mcs_inclusion_frequency,
    noisy_proxy,
    noisy_proxy_path,
    portfolio_variance,
)

SLOW = os.getenv("VOLREC_SLOW_TESTS") == "1"
M_DATES = 250
BOOTSTRAP = 1000


class LossTests(unittest.TestCase):
    def test_pointwise_losses(self):
        self.assertEqual(loss_series([2.0], [1.0], "MSE")[0], 1.0)
        self.assertEqual(loss_series([2.0], [3.5], "MAE")[0], 1.5)
        self.assertAlmostEqual(loss_series([2.0], [1.0], "QLIKE")[0], 1.0 - np.log(2.0), places=14)

    def test_qlike_is_zero_for_exact_forecast(self):
        values = np.array([0.3, 1.7, 1e-6])
        np.testing.assert_array_equal(loss_series(values, values, "QLIKE"), np.zeros(3))

    def test_qlike_rejects_nonpositive_forecast(self):
        with self.assertRaises(InvalidInput):
            loss_series([1.0, 1.0], [1.0, 0.0], "QLIKE")

    def test_shape_mismatch_and_unknown_kind(self):
        with self.assertRaises(InvalidInput):
            loss_series([1.0, 2.0], [1.0], "MSE")
        with self.assertRaises(InvalidInput):
            loss_series([1.0], [1.0], "MAPE")


class PanelTests(unittest.TestCase):
    def test_ind_is_column_mean(self):
        panel = LossPanel(np.array([[1.0, 2.0], [3.0, 6.0]]), ["base", "shr"], "MSE")
        np.testing.assert_allclose(panel.ind, [2.0, 4.0])

    def test_rejects_non_finite_losses(self):
        with self.assertRaises(InvalidInput):
            LossPanel(np.array([[1.0, np.nan]]), ["base", "shr"], "MSE")

    def test_rejects_column_mismatch(self):
        with self.assertRaises(InvalidInput):
            LossPanel(np.ones((3, 2)), ["base"], "MAE")


class AvgRelTests(unittest.TestCase):
    def test_geometric_mean_of_ratios(self):
        ind = np.array([[1.0, 2.0, 1.0], [1.0, 8.0, 4.0]])
        np.testing.assert_allclose(avg_rel(ind, 0), [1.0, 4.0, 2.0])

    def test_reverse_ratios_cancel(self):
        ind = np.array([[1.0, 2.0], [4.0, 2.0]])
        np.testing.assert_allclose(avg_rel(ind, 0), [1.0, 1.0])

    def test_zero_losses_are_floored_with_warning(self):
        with self.assertLogs(level="WARNING"):
            out = avg_rel(np.array([[0.0, 1.0]]), 1)
        self.assertEqual(out[1], 1.0)
        self.assertTrue(np.isfinite(out[0]))

    def test_bad_reference(self):
        with self.assertRaises(InvalidInput):
            avg_rel(np.ones((2, 2)), 2)


class DieboldMarianoTests(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(10)
        self.a = rng.random(300)
        self.b = rng.random(300)

    def test_zero_lags_uses_plain_variance(self):
        d = self.a - self.b
        expected = d.mean() / np.sqrt(np.mean((d - d.mean()) ** 2) / d.size)
        self.assertAlmostEqual(dm_test(self.a, self.b, 0).stat, expected, places=10)

    def test_better_forecast_has_negative_statistic(self):
        result = dm_test(self.a, self.a + 0.5 + 0.1 * self.b, 4, n_comparisons=3)
        self.assertLess(result.stat, 0)
        self.assertLess(result.pvalue_raw, 1e-6)
        self.assertEqual(result.pvalue_bonferroni, min(1.0, 3 * result.pvalue_raw))

    def test_identical_losses_are_degenerate(self):
        with self.assertRaises(DegenerateVariance):
            dm_test(self.a, self.a, 2)

    def test_needs_enough_observations(self):
        with self.assertRaises(InvalidInput):
            dm_test(self.a[:5], self.b[:5], 0)

    def test_matrix_is_antisymmetric_and_skips_identical_pairs(self):
        losses = np.column_stack([self.a, self.b, self.a])
        out = dm_matrix(LossPanel(losses, ["base", "bu", "shr"], "MAE"), 3)
        self.assertAlmostEqual(out.stat[0, 1], -out.stat[1, 0])
        self.assertTrue(np.isnan(out.stat[0, 2]))
        self.assertEqual(out.pvalue_raw[0, 1], out.pvalue_raw[1, 0])
        self.assertTrue(np.all(np.isnan(np.diag(out.stat))))

    def test_wins_count_significant_improvements(self):
        losses = np.column_stack([self.a, self.a + 1.0 + 0.1 * self.b])
        dm = dm_matrix(LossPanel(losses, ["shr", "base"], "MSE"), 0)
        wins = dm_wins([dm, dm])
        self.assertEqual(wins[0, 1], 1.0)
        self.assertEqual(wins[1, 0], 0.0)

    @unittest.skipUnless(SLOW, "set VOLREC_SLOW_TESTS=1 for Monte Carlo checks")
    def test_size_under_equal_accuracy(self):
        rng = np.random.default_rng(0)
        rejections = 0
        trials = 10_000
        for _ in range(trials):
            x = rng.standard_normal((M_DATES, 2))
            rejections += dm_test(x[:, 0] ** 2, x[:, 1] ** 2, 0).pvalue_raw < 0.05
        rate = rejections / trials
        self.assertGreaterEqual(rate, 0.035)
        self.assertLessEqual(rate, 0.065)


class ModelConfidenceSetTests(unittest.TestCase):
    def setUp(self):
        self.losses = np.random.default_rng(3).random((M_DATES, 3))

    def test_clearly_worse_approach_is_excluded(self):
        losses = self.losses.copy()
        losses[:, 2] += 10.0
        out = mcs(LossPanel(losses, ["base", "bu", "shr"], "MSE"), n_bootstrap=BOOTSTRAP, seed=1)
        for level in MCS_LEVELS:
            self.assertFalse(out.included[level][2])
        self.assertLess(out.pvalues[2], 0.05)
        self.assertEqual(out.elimination_order[0], 2)
        self.assertEqual(out.pvalues.max(), 1.0)

    def test_identical_approaches_are_retained(self):
        losses = np.column_stack([self.losses[:, 0]] * 3)
        out = mcs(LossPanel(losses, ["base", "bu", "shr"], "MSE"), n_bootstrap=BOOTSTRAP, seed=2)
        np.testing.assert_array_equal(out.pvalues, np.ones(3))
        self.assertTrue(np.all(out.included[0.95]))
        self.assertTrue(np.all(out.included[0.70]))

    def test_wider_levels_contain_narrower_sets(self):
        out = mcs(LossPanel(self.losses, ["base", "bu", "shr"], "MAE"), n_bootstrap=BOOTSTRAP, seed=3)
        self.assertTrue(np.all(out.included[0.95] >= out.included[0.70]))

    def test_same_seed_repeats(self):
        panel = LossPanel(self.losses, ["base", "bu", "shr"], "MAE")
        first = mcs(panel, n_bootstrap=BOOTSTRAP, seed=9)
        second = mcs(panel, n_bootstrap=BOOTSTRAP, seed=9)
        np.testing.assert_array_equal(first.pvalues, second.pvalues)

    def test_input_checks(self):
        with self.assertRaises(InvalidInput):
            mcs(LossPanel(self.losses[:, :1], ["base"], "MSE"))
        with self.assertRaises(InvalidInput):
            mcs(LossPanel(self.losses[:10], ["base", "bu", "shr"], "MSE"))

    def test_inclusion_frequency(self):
        losses = self.losses.copy()
        losses[:, 2] += 10.0
        panel = LossPanel(losses, ["base", "bu", "shr"], "MSE")
        results = [mcs(panel, n_bootstrap=BOOTSTRAP, seed=s) for s in range(2)]
        table = mcs_inclusion_frequency(results, panel.approach_names)
        self.assertEqual(list(table.columns), ["70%", "75%", "80%", "85%", "90%", "95%"])
        self.assertEqual(table.loc["shr", "95%"], 0.0)


class ProxyTests(unittest.TestCase):
    def test_extremes(self):
        r = np.array([1.0, -2.0])
        cov = np.array([[2.0, 0.5], [0.5, 1.0]])
        np.testing.assert_array_equal(noisy_proxy(r, cov, 0.0), cov)
        np.testing.assert_array_equal(noisy_proxy(r, cov, 1.0), np.outer(r, r))

    def test_path_matches_pointwise(self):
        rng = np.random.default_rng(1)
        returns = rng.standard_normal((4, 2))
        covs = np.stack([np.eye(2)] * 4)
        path = noisy_proxy_path(returns, covs, 0.3)
        np.testing.assert_allclose(path[2], noisy_proxy(returns[2], covs[2], 0.3))

    def test_delta_out_of_range(self):
        with self.assertRaises(InvalidInput):
            noisy_proxy(np.ones(2), np.eye(2), 1.5)

    def test_portfolio_variance(self):
        covs = np.stack([np.eye(2), 2 * np.eye(2)])
        np.testing.assert_allclose(portfolio_variance(covs, [0.5, 0.5]), [0.5, 1.0])


if __name__ == "__main__":
    unittest.main()
