import os
import unittest

import numpy as np

from volrec.errors import DegenerateErrors, InfeasibleReconciliation, InvalidInput, SingularProjection
from volrec.matrix import vech, vech_positions
from volrec.reconciliation import (
    VARIANCE_FLOOR,
    BaseForecastSet,
    ErrorCovariance,
    algorithm1,
    build_constraint,
    correlation_valid,
    gls_objective,
    insample_errors,
    make_base_forecasts,
    reconcile_approaches,
    reconcile_shr,
    reconcile_shr_a,
    reconcile_shr_b,
    shrink_cov,
)

SLOW = os.getenv("VOLREC_SLOW_TESTS") == "1"
WEIGHTS = np.array([0.5, 0.5])
SIZES = (2, 5, 9)


def _violating_base():
    # GLS with identity weighting pushes the implied correlation to about 1.23
    return BaseForecastSet(3.0, vech(np.array([[1.0, 0.95], [0.95, 1.0]])))


def _coherence_gap(y, weights=WEIGHTS):
    return float(build_constraint(weights) @ y)


class ConstraintTests(unittest.TestCase):
    def test_two_asset_constraint(self):
        np.testing.assert_allclose(build_constraint(WEIGHTS), [1.0, -0.25, -0.5, -0.25])

    def test_rejects_empty_weights(self):
        with self.assertRaises(InvalidInput):
            build_constraint([])


class BaseForecastTests(unittest.TestCase):
    def test_nonpositive_variances_are_clamped(self):
        with self.assertLogs(level="WARNING") as logs:
            base = make_base_forecasts(-0.1, np.array([[0.0, 0.0], [0.0, 2.0]]))
        self.assertEqual(base.sigma_p2_hat, VARIANCE_FLOOR)
        self.assertEqual(base.clamped, 2)
        self.assertEqual(base.sigma_hat[0], VARIANCE_FLOOR)
        self.assertIn("count=2", logs.output[0])

    def test_direct_construction_validates(self):
        with self.assertRaises(InvalidInput):
            BaseForecastSet(0.0, vech(np.eye(2)))

    def test_stacked_vector(self):
        base = _violating_base()
        np.testing.assert_allclose(base.stacked(), [3.0, 1.0, 0.95, 1.0])
        self.assertEqual(base.n_assets, 2)


class InsampleErrorTests(unittest.TestCase):
    def test_returns_proxy_uses_outer_products(self):
        returns = np.array([[1.0, 2.0], [0.0, -1.0]])
        fitted = np.stack([np.eye(2), 2 * np.eye(2)])
        errors = insample_errors(np.array([0.5, 0.5]), fitted, returns, WEIGHTS)
        self.assertEqual(errors.shape, (2, 4))
        # portfolio return 1.5 -> proxy 2.25
        np.testing.assert_allclose(errors[0], [2.25 - 0.5, 0.0, 2.0, 3.0])
        np.testing.assert_allclose(errors[1], [0.25 - 0.5, -2.0, 0.0, -1.0])

    def test_misaligned_paths_raise(self):
        with self.assertRaises(InvalidInput):
            insample_errors(np.ones(3), np.stack([np.eye(2)] * 2), np.ones((2, 2)), WEIGHTS)


class ShrinkageTests(unittest.TestCase):
    def test_shrunk_matrix_keeps_second_moments_on_the_diagonal(self):
        errors = np.random.default_rng(6).standard_normal((400, 4))
        out = shrink_cov(errors)
        self.assertTrue(0.0 <= out.shrinkage_intensity <= 1.0)
        self.assertEqual(out.n_obs, 400)
        np.testing.assert_allclose(np.diag(out.omega), np.mean(errors**2, axis=0))
        self.assertGreater(np.linalg.eigvalsh(out.omega)[0], 0.0)

    def test_perfectly_collinear_errors_stay_definite(self):
        x = np.random.default_rng(2).standard_normal(50)
        out = shrink_cov(np.column_stack([x, 2 * x, x + 1.0]))
        self.assertGreater(np.linalg.eigvalsh(out.omega)[0], 0.0)

    def test_constant_column_is_degenerate(self):
        errors = np.random.default_rng(1).standard_normal((30, 3))
        errors[:, 1] = 0.5
        with self.assertRaises(DegenerateErrors):
            shrink_cov(errors)

    def test_needs_two_rows(self):
        with self.assertRaises(InvalidInput):
            shrink_cov(np.ones((1, 3)))


class ShrTests(unittest.TestCase):
    def test_projection_is_coherent(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((4, 4))
        omega = x @ x.T + np.eye(4)
        y_hat = np.array([1.2, 1.0, 0.3, 0.8])
        out = reconcile_shr(y_hat, omega, build_constraint(WEIGHTS))
        self.assertAlmostEqual(_coherence_gap(out.y_tilde), 0.0, places=12)
        self.assertEqual(out.method_used, "shr")

    def test_coherent_forecasts_are_unchanged(self):
        y_hat = np.array([0.6, 1.0, 0.2, 1.0])
        out = reconcile_shr(y_hat, np.eye(4), build_constraint(WEIGHTS))
        np.testing.assert_allclose(out.y_tilde, y_hat, atol=1e-14)
        self.assertTrue(out.correlation_ok)

    def test_identity_weighting_can_break_correlation_bounds(self):
        base = _violating_base()
        out = reconcile_shr(base.stacked(), np.eye(4), build_constraint(WEIGHTS))
        self.assertFalse(out.correlation_ok)
        self.assertAlmostEqual(out.sigma_tilde[0, 0], 1.0 + 0.25 * 2.025 / 1.375, places=12)
        rho = out.sigma_tilde[0, 1] / out.sigma_tilde[0, 0]
        self.assertAlmostEqual(rho, 1.2326, places=3)

    def test_singular_projection(self):
        omega = np.zeros((4, 4))
        with self.assertRaises(SingularProjection):
            reconcile_shr(np.ones(4), omega, build_constraint(WEIGHTS))


class CorrelationBoundedTests(unittest.TestCase):
    def test_option_a_restores_valid_correlation(self):
        base = _violating_base()
        c = build_constraint(WEIGHTS)
        shr = reconcile_shr(base.stacked(), np.eye(4), c)
        out = reconcile_shr_a(base.stacked(), np.eye(4), c)
        self.assertEqual(out.method_used, "shr_A")
        self.assertTrue(out.correlation_ok)
        self.assertAlmostEqual(_coherence_gap(out.y_tilde), 0.0, places=10)
        self.assertGreaterEqual(
            gls_objective(out.y_tilde, base.stacked(), np.eye(4)),
            gls_objective(shr.y_tilde, base.stacked(), np.eye(4)) - 1e-9,
        )

    def test_option_a_without_violation_returns_shr(self):
        y_hat = np.array([0.6, 1.0, 0.2, 1.0])
        out = reconcile_shr_a(y_hat, np.eye(4), build_constraint(WEIGHTS))
        self.assertFalse(out.diagnostics["constraints_active"])
        np.testing.assert_allclose(out.y_tilde, y_hat, atol=1e-14)

    def test_option_b_solves_for_correlation(self):
        w = np.diag([0.0, 1.0, 1.0, 1.0])
        out = reconcile_shr_b(np.array([0.9, 1.0, 0.5, 1.0]), np.eye(2), [1.0, 0.5, 1.0], w, WEIGHTS)
        self.assertEqual(out.method_used, "shr_B")
        self.assertAlmostEqual(out.sigma_tilde[0, 1], 0.8, places=10)
        self.assertAlmostEqual(out.sigma_p2, 0.9, places=10)
        np.testing.assert_allclose(np.diag(out.sigma_tilde), [1.0, 1.0])

    def test_option_b_is_infeasible_beyond_perfect_correlation(self):
        w = np.diag([0.0, 1.0, 1.0, 1.0])
        with self.assertRaises(InfeasibleReconciliation):
            reconcile_shr_b(np.array([10.0, 1.0, 0.5, 1.0]), np.eye(2), [1.0, 0.5, 1.0], w, WEIGHTS)


class AlgorithmTests(unittest.TestCase):
    def test_valid_projection_stops_after_shr(self):
        base = BaseForecastSet(0.7, vech(np.array([[1.0, 0.2], [0.2, 1.0]])))
        out = algorithm1(base, np.eye(4), WEIGHTS)
        self.assertEqual(out.method_used, "shr")

    def test_second_stage_options(self):
        base = _violating_base()
        for option, method in (("A", "shr_A"), ("B", "shr_B"), ("auto", "shr_B")):
            out = algorithm1(base, np.eye(4), WEIGHTS, option=option)
            self.assertEqual(out.method_used, method)
            self.assertTrue(np.all(np.abs(out.sigma_tilde[0, 1]) <= np.sqrt(np.prod(np.diag(out.sigma_tilde))) + 1e-10))
            self.assertAlmostEqual(_coherence_gap(out.y_tilde), 0.0, places=9)

    def test_unknown_option(self):
        with self.assertRaises(InvalidInput):
            algorithm1(_violating_base(), np.eye(4), WEIGHTS, option="C")

    def test_approaches_share_inputs(self):
        base = _violating_base()
        out = reconcile_approaches(base, np.eye(4), WEIGHTS)
        self.assertEqual(set(out), {"base", "bu", "shr", "shr_A", "shr_B"})
        self.assertEqual(out["base"].sigma_p2, 3.0)
        self.assertAlmostEqual(out["bu"].sigma_p2, 0.975)
        self.assertFalse(out["shr"].correlation_ok)
        self.assertTrue(out["shr_A"].correlation_ok)
        self.assertTrue(out["shr_B"].correlation_ok)

    def test_approaches_collapse_when_shr_is_valid(self):
        base = BaseForecastSet(0.7, vech(np.array([[1.0, 0.2], [0.2, 1.0]])))
        out = reconcile_approaches(base, np.eye(4), WEIGHTS)
        self.assertIs(out["shr_A"], out["shr"])
        self.assertIs(out["shr_B"], out["shr"])


PROPERTY_SEED = 20240601


def _random_instance(rng, n):
    """Factor-structured covariance forecast, a disagreeing portfolio forecast and an SPD Omega."""
    m = n * (n + 1) // 2
    loadings = rng.uniform(0.5, 1.5, n)
    sigma = rng.uniform(0.3, 0.9) * np.outer(loadings, loadings) + np.diag(rng.uniform(0.05, 0.5, n))
    weights = rng.dirichlet(np.ones(n))
    bu = float(weights @ sigma @ weights)
    p2 = bu * float(np.exp(rng.uniform(-0.5, 1.0)))
    q, _ = np.linalg.qr(rng.standard_normal((m + 1, m + 1)))
    omega = (q * rng.uniform(0.5, 2.0, m + 1)) @ q.T
    omega = 0.5 * (omega + omega.T)
    return BaseForecastSet(p2, vech(sigma)), ErrorCovariance(omega, 0.0, 0), weights


def _scale(y):
    return max(1.0, float(np.max(np.abs(y))))


class ReconciliationPropertyTests(unittest.TestCase):
    def _check_contracts(self, count):
        rng = np.random.default_rng(PROPERTY_SEED)
        usable = 0
        for k in range(count):
            n = SIZES[k % len(SIZES)]
            base, omega, weights = _random_instance(rng, n)
            y_hat = base.stacked()
            c = build_constraint(weights)
            scale = _scale(y_hat)
            shr = reconcile_shr(y_hat, omega, c)
            self.assertLessEqual(abs(c @ shr.y_tilde), 1e-10 * scale)
            if np.any(np.diag(shr.sigma_tilde) <= 0):
                continue
            usable += 1
            results = reconcile_approaches(base, omega, weights)
            for key in ("shr_A", "shr_B"):
                out = results[key]
                self.assertLessEqual(abs(c @ out.y_tilde), 1e-8 * scale, key)
                self.assertTrue(correlation_valid(out.sigma_tilde), key)
                if out.method_used == "shr_B":
                    rows, cols = vech_positions(n)
                    np.testing.assert_array_equal(out.diagnostics["rho_tilde"][rows == cols], 1.0)
            bounded = results["shr_A"]
            if bounded.method_used == "shr_A" and bounded.diagnostics["constraints_active"]:
                self.assertGreaterEqual(
                    bounded.diagnostics["objective"], bounded.diagnostics["shr_objective"] * (1 - 1e-9) - 1e-12
                )
        self.assertGreater(usable, count // 5)

    def test_contracts_hold_on_random_inputs(self):
        self._check_contracts(60)

    @unittest.skipUnless(SLOW, "set VOLREC_SLOW_TESTS=1 for Monte Carlo checks")
    def test_contracts_hold_on_ten_thousand_inputs(self):
        self._check_contracts(10_000)

    def test_projection_matches_kkt_solve(self):
        rng = np.random.default_rng(PROPERTY_SEED + 1)
        for k in range(1000):
            base, omega, weights = _random_instance(rng, SIZES[k % len(SIZES)])
            y_hat = base.stacked()
            c = build_constraint(weights)
            size = y_hat.size
            omega_inv = np.linalg.inv(omega.omega)
            kkt = np.zeros((size + 1, size + 1))
            kkt[:size, :size] = 2.0 * omega_inv
            kkt[:size, size] = c
            kkt[size, :size] = c
            expected = np.linalg.solve(kkt, np.concatenate((2.0 * omega_inv @ y_hat, [0.0])))[:size]
            out = reconcile_shr(y_hat, omega, c)
            np.testing.assert_allclose(out.y_tilde, expected, rtol=1e-10, atol=1e-10 * _scale(y_hat))

    def test_projection_ignores_the_scale_of_omega(self):
        rng = np.random.default_rng(PROPERTY_SEED + 2)
        for n in SIZES:
            base, omega, weights = _random_instance(rng, n)
            y_hat = base.stacked()
            c = build_constraint(weights)
            atol = 1e-14 * _scale(y_hat)
            for matrix in (omega.omega, np.eye(y_hat.size)):
                out = reconcile_shr(y_hat, matrix, c)
                scaled = reconcile_shr(y_hat, 7.3 * matrix, c)
                np.testing.assert_allclose(scaled.y_tilde, out.y_tilde, rtol=1e-12, atol=atol)

    def test_projection_is_idempotent(self):
        rng = np.random.default_rng(PROPERTY_SEED + 3)
        for n in SIZES:
            base, omega, weights = _random_instance(rng, n)
            c = build_constraint(weights)
            once = reconcile_shr(base.stacked(), omega, c)
            twice = reconcile_shr(once.y_tilde, omega, c)
            np.testing.assert_allclose(twice.y_tilde, once.y_tilde, rtol=0, atol=1e-12 * _scale(once.y_tilde))

    def test_projection_beats_coherent_perturbations(self):
        rng = np.random.default_rng(PROPERTY_SEED + 4)
        for n in SIZES:
            base, omega, weights = _random_instance(rng, n)
            y_hat = base.stacked()
            c = build_constraint(weights)
            out = reconcile_shr(y_hat, omega, c)
            best = gls_objective(out.y_tilde, y_hat, omega.omega)
            for _ in range(100):
                z = 0.1 * rng.standard_normal(y_hat.size)
                d = z - c * (c @ z) / (c @ c)
                self.assertGreater(gls_objective(out.y_tilde + d, y_hat, omega.omega), best)


if __name__ == "__main__":
    unittest.main()
