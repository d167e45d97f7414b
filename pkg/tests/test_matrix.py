import unittest

import numpy as np

from volrec.errors import DegenerateCovariance, InvalidInput
from volrec.matrix import (
    aggregation_vector,
    cov_to_cor,
    dimension_from_vech,
    duplication,
    duplication_pinv,
    is_positive_definite,
    scaled_aggregation_vector,
    symmetrize,
    vec,
    vech,
    vech_inv,
    vech_stack,
)


def _random_spd(n, rng):
    x = rng.standard_normal((n, n))
    s = x @ x.T + n * np.eye(n)
    return 0.5 * (s + s.T)


class VechTests(unittest.TestCase):
    def test_vech_reads_lower_triangle_column_by_column(self):
        m = np.array([[1.0, 2.0, 4.0], [2.0, 3.0, 5.0], [4.0, 5.0, 6.0]])
        np.testing.assert_array_equal(vech(m), [1.0, 2.0, 4.0, 3.0, 5.0, 6.0])

    def test_vech_inv_restores_matrix(self):
        rng = np.random.default_rng(3)
        m = _random_spd(4, rng)
        np.testing.assert_allclose(vech_inv(vech(m)), m, rtol=0, atol=1e-12)

    def test_vech_rejects_asymmetric_matrix(self):
        with self.assertRaises(InvalidInput):
            vech(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_dimension_from_vech_rejects_non_triangular_length(self):
        self.assertEqual(dimension_from_vech(6), 3)
        with self.assertRaises(InvalidInput):
            dimension_from_vech(5)

    def test_vech_stack_matches_single_vech(self):
        rng = np.random.default_rng(4)
        stack = np.stack([_random_spd(3, rng) for _ in range(5)])
        out = vech_stack(stack)
        self.assertEqual(out.shape, (5, 6))
        np.testing.assert_array_equal(out[2], vech(stack[2]))


class DuplicationTests(unittest.TestCase):
    def test_duplication_maps_vech_to_vec(self):
        rng = np.random.default_rng(5)
        for n in (1, 2, 5):
            m = _random_spd(n, rng)
            np.testing.assert_allclose(duplication(n) @ vech(m), vec(m), rtol=0, atol=1e-12)

    def test_pseudo_inverse_is_left_inverse(self):
        for n in (2, 4):
            np.testing.assert_allclose(duplication_pinv(n) @ duplication(n), np.eye(n * (n + 1) // 2), atol=1e-12)

    def test_duplication_is_read_only(self):
        with self.assertRaises(ValueError):
            duplication(3)[0, 0] = 2.0


class AggregationTests(unittest.TestCase):
    def test_aggregation_vector_gives_portfolio_variance(self):
        rng = np.random.default_rng(6)
        sigma = _random_spd(5, rng)
        w = rng.random(5)
        self.assertAlmostEqual(aggregation_vector(w) @ vech(sigma), w @ sigma @ w, places=10)

    def test_scaled_aggregation_acts_on_correlations(self):
        rng = np.random.default_rng(7)
        sigma = _random_spd(4, rng)
        w = np.full(4, 0.25)
        corr, scale = cov_to_cor(sigma)
        value = scaled_aggregation_vector(w, np.diag(scale)) @ vech(corr)
        self.assertAlmostEqual(value, w @ sigma @ w, places=10)


class CovarianceHelperTests(unittest.TestCase):
    def test_cov_to_cor_has_unit_diagonal(self):
        corr, scale = cov_to_cor(np.array([[4.0, 1.0], [1.0, 9.0]]))
        np.testing.assert_array_equal(np.diag(corr), [1.0, 1.0])
        self.assertAlmostEqual(corr[0, 1], 1.0 / 6.0)
        np.testing.assert_allclose(np.diag(scale), [2.0, 3.0])

    def test_cov_to_cor_rejects_nonpositive_variance(self):
        with self.assertRaises(DegenerateCovariance):
            cov_to_cor(np.array([[0.0, 0.0], [0.0, 1.0]]))

    def test_symmetrize_averages_off_diagonal(self):
        np.testing.assert_array_equal(symmetrize(np.array([[1.0, 2.0], [0.0, 1.0]])), [[1.0, 1.0], [1.0, 1.0]])

    def test_is_positive_definite(self):
        self.assertTrue(is_positive_definite(np.eye(3)))
        self.assertFalse(is_positive_definite(np.array([[1.0, 2.0], [2.0, 1.0]])))


if __name__ == "__main__":
    unittest.main()
