"""
Unit tests for the randomized property suites.
"""
import unittest

import numpy as np

from conefun import ConeFunction, rank_condition
from errors import ArgumentError
from lemmas import (check_lemmas, cone_functions, fd_g_oracle, g_from_configuration, random_hermitian,
                    suite_chain_rule, suite_cone_functions, suite_dual_path, suite_frame_invariance,
                    suite_sum_structure, suite_unitary_blocks)
from multiindex import enumerate_table


class TestFiniteDifferenceOracle(unittest.TestCase):
    """Test cases for the finite-difference G."""

    def setUp(self):
        self.table = enumerate_table(3, 2)
        self.rng = np.random.default_rng(21)

    def test_matches_contraction(self):
        """Test the oracle against the analytic G for both families."""
        for cone in (ConeFunction('sigma_k_root', 2, 3), ConeFunction('log_rho_k', 2, 3)):
            X = random_hermitian(self.rng, 3, 3, scale=0.1)
            h = random_hermitian(self.rng, 3, 3, scale=0.3) + 3 * np.eye(3)
            for i in range(3):
                _, G = g_from_configuration(cone, self.table, X[i], h[i])
                with self.subTest(cone=cone.describe(), sample=i):
                    scale = max(1.0, float(np.max(np.abs(G))))
                    np.testing.assert_allclose(fd_g_oracle(cone, self.table, X[i], h[i]), G,
                                               atol=1e-6 * scale)

    def test_sigma_two_example(self):
        """Test G = diag(17, 16, 15) / (2 sqrt 47) at h = diag(1, 2, 3)."""
        cone = ConeFunction('sigma_k_root', 2, 3)
        G = fd_g_oracle(cone, self.table, np.zeros((3, 3)), np.diag([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(G, np.diag([17.0, 16.0, 15.0]) / (2 * np.sqrt(47.0)), atol=1e-8)

    def test_step_underflow(self):
        """Test that a step below the resolution of h is rejected."""
        with self.assertRaises(ArgumentError):
            fd_g_oracle(ConeFunction('sigma_k_root', 1, 3), self.table, np.zeros((3, 3)), np.eye(3), step=1e-20)

    def test_batched_input(self):
        """Test that the oracle takes one point only."""
        with self.assertRaises(ArgumentError):
            fd_g_oracle(ConeFunction('sigma_k_root', 1, 3), self.table, np.zeros((3, 3)), np.eye(3)[None])


class TestSuites(unittest.TestCase):
    """Test cases for individual suites."""

    def setUp(self):
        self.rng = np.random.default_rng(5)

    def test_dual_path(self):
        """Test that both G assemblies agree."""
        result = suite_dual_path(enumerate_table(4, 2), 50, self.rng)
        self.assertTrue(result.passed)
        self.assertEqual(result.checked, 50)

    def test_unitary_blocks(self):
        """Test the block sum bound on random unitaries."""
        self.assertTrue(suite_unitary_blocks(enumerate_table(3, 2), self.rng).passed)

    def test_sum_structure(self):
        """Test the eigenvalue sum structure of h ^ omega^{p-1}."""
        self.assertTrue(suite_sum_structure(enumerate_table(3, 2), 50, self.rng).passed)

    def test_chain_rule_covers_every_usable_f(self):
        """Test that the chain rule runs one point per ten samples for each f passing the rank test."""
        table = enumerate_table(3, 2)
        usable = [cone for cone in cone_functions(3) if rank_condition(cone, 3, 2)[0]]
        self.assertGreater(len(usable), 2)
        result = suite_chain_rule(table, 100, self.rng)
        self.assertTrue(result.passed, result.detail)
        self.assertEqual(result.checked, 2 * 10 * len(usable))

    def test_structure_uses_sample_count(self):
        """Test that structure checks draw the requested number of samples."""
        results = suite_cone_functions(enumerate_table(3, 2), 3000, self.rng)
        structure = [result for result in results if result.name.startswith('structure')]
        self.assertTrue(structure)
        for result in structure:
            self.assertEqual(result.checked, 2 * 3000)

    def test_frame_invariance_with_congruence(self):
        """Test frame and congruence invariance of the generalized spectrum."""
        result = suite_frame_invariance(enumerate_table(4, 2), 30, self.rng)
        self.assertTrue(result.passed)
        self.assertIn('congruence', result.detail)


class TestCheckLemmas(unittest.TestCase):
    """Test cases for the full property run."""

    def test_passes_for_three_two(self):
        """Test that every suite passes for n = 3, p = 2."""
        report = check_lemmas(3, 2, samples=200, seed=7)
        self.assertTrue(report.passed, '\n'.join(report.lines()))
        names = {suite.name for suite in report.suites}
        for expected in ('dual path', 'chain rule', 'unitary blocks', 'frame invariance',
                         'basis independence', 'sum structure'):
            self.assertIn(expected, names)

    def test_passes_for_four_two(self):
        """Test a larger index set."""
        report = check_lemmas(4, 2, samples=100, seed=3)
        self.assertTrue(report.passed, '\n'.join(report.lines()))

    def test_passes_for_four_three(self):
        """Test (n, p) = (4, 3) at a reduced sample count."""
        report = check_lemmas(4, 3, samples=50, seed=11)
        self.assertTrue(report.passed, '\n'.join(report.lines()))

    def test_report_lines(self):
        """Test the PASS/FAIL line format."""
        lines = check_lemmas(3, 2, samples=20, seed=1).lines()
        self.assertTrue(all(line.startswith(('PASS ', 'FAIL ')) for line in lines))
        self.assertTrue(any('cases, worst' in line for line in lines))

    def test_invalid_arguments(self):
        """Test that p > n and samples < 1 are rejected."""
        with self.assertRaises(ArgumentError):
            check_lemmas(3, 4)
        with self.assertRaises(ArgumentError):
            check_lemmas(3, 2, samples=0)


if __name__ == '__main__':
    unittest.main()
