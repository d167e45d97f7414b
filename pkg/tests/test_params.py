import unittest

import numpy as np

from volrec.errors import InvalidInput
from volrec.params import (
    DccParams,
    EdccParams,
    FBekkParams,
    Garch11Params,
    SBekkParams,
    spectral_radius,
    stationarity_check,
)


class Garch11ParamsTests(unittest.TestCase):
    def test_unconditional_variance(self):
        params = Garch11Params(0.05, 0.05, 0.90)
        self.assertAlmostEqual(params.unconditional_variance, 1.0)
        self.assertTrue(stationarity_check(params).ok)

    def test_rejects_nonpositive_intercept(self):
        with self.assertRaises(InvalidInput):
            Garch11Params(0.0, 0.1, 0.8)

    def test_integrated_process_has_no_unconditional_variance(self):
        params = Garch11Params(0.05, 0.10, 0.90)
        self.assertFalse(stationarity_check(params).ok)
        with self.assertRaises(InvalidInput):
            _ = params.unconditional_variance


class BekkParamsTests(unittest.TestCase):
    def test_scalar_bekk_requires_lower_triangular_intercept(self):
        with self.assertRaises(InvalidInput):
            SBekkParams(np.array([[1.0, 0.5], [0.0, 1.0]]), 0.05, 0.9)

    def test_scalar_bekk_report_binds_on_alpha_plus_beta(self):
        report = stationarity_check(SBekkParams(np.eye(2), 0.05, 0.93))
        self.assertTrue(report.ok)
        self.assertAlmostEqual(report.binding, 0.98)

    def test_full_bekk_with_scalar_matrices_matches_scalar_persistence(self):
        c = np.eye(3)
        params = FBekkParams(c, np.sqrt(0.05) * np.eye(3), np.sqrt(0.90) * np.eye(3))
        report = stationarity_check(params)
        self.assertAlmostEqual(report.binding, 0.95, places=12)
        self.assertTrue(report.ok)

    def test_full_bekk_rejects_mismatched_shapes(self):
        with self.assertRaises(InvalidInput):
            FBekkParams(np.eye(2), np.eye(3), np.eye(2))


class CorrelationParamsTests(unittest.TestCase):
    def setUp(self):
        self.gamma = np.array([[1.0, 0.3], [0.3, 1.0]])
        self.marginals = (Garch11Params(0.05, 0.05, 0.9), Garch11Params(0.1, 0.1, 0.8))

    def test_dcc_rejects_unit_correlation_persistence(self):
        with self.assertRaises(InvalidInput):
            DccParams(self.marginals, self.gamma, 0.2, 0.8)

    def test_dcc_rejects_gamma_without_unit_diagonal(self):
        with self.assertRaises(InvalidInput):
            DccParams(self.marginals, 2.0 * self.gamma, 0.05, 0.9)

    def test_dcc_report_takes_worst_component(self):
        report = stationarity_check(DccParams(self.marginals, self.gamma, 0.03, 0.90))
        self.assertAlmostEqual(report.binding, 0.95)
        self.assertAlmostEqual(report.details["theta_sum"], 0.93)

    def test_edcc_requires_diagonal_b(self):
        with self.assertRaises(InvalidInput):
            EdccParams(np.ones(2), np.zeros((2, 2)), np.array([[0.9, 0.01], [0.0, 0.9]]), self.gamma, 0.05, 0.9)

    def test_edcc_stationarity_uses_spectral_radius(self):
        a = np.array([[0.05, 0.02], [0.02, 0.05]])
        b = np.diag([0.9, 0.9])
        report = stationarity_check(EdccParams(np.full(2, 0.03), a, b, self.gamma, 0.05, 0.9))
        self.assertAlmostEqual(report.details["variance_radius"], 0.97)
        self.assertTrue(report.ok)

    def test_spectral_radius_of_empty_matrix(self):
        self.assertEqual(spectral_radius(np.zeros((0, 0))), 0.0)


if __name__ == "__main__":
    unittest.main()
