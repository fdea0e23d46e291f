"""
Integration tests for ppflow.
Tests scenario files through the flow, the monitors and the written artifacts.
"""
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import numpy as np

from fielddump import read_diagnostics_csv, read_field
from lemmas import check_lemmas
from scenario import build_scenario, execute_run, parse_config
from torusgrid import solve_complex_laplacian

TRACE_POISSON = """
[problem]
n = 3
p = 2
family = "sigma_k_root"
k = 1

[psi]
modes = [{amplitude = 0.1, wave = [1, 0, 0, 0, 0, 0]}]

[flow]
t_max = 3.0
tol_residual = 1e-9
oscillation_period = 0.25
"""

SIGMA_TWO = """
[problem]
n = 3
p = 2
family = "sigma_k_root"
k = 2

[grid]
K = {K}

[psi]
modes = [{{amplitude = 0.05, wave = [1, 0, 0, 0, 0, 0]}}]

[flow]
t_max = 3.0
tol_residual = {tol}
oscillation_period = 0.125
"""


def sigma_two(K=16, tol=1e-5):
    return parse_config(SIGMA_TWO.format(K=K, tol=tol))


class TestScenarioRuns(unittest.TestCase):
    """Integration tests from scenario text to artifacts."""

    def setUp(self):
        """Set up a scratch output directory."""
        self.tmp = tempfile.TemporaryDirectory()
        self.out = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_trace_flow_reaches_poisson_solution(self):
        """Test that the sigma_1 flow ends at the Poisson solution for psi."""
        config = parse_config(TRACE_POISSON)
        report = execute_run(config, self.out)

        self.assertEqual(report.verdict, 'converged')
        grid = build_scenario(config).scenario.grid
        phi = read_field(self.out / 'phi_final.bin', shape=grid.shape).values
        rhs = 0.1 * np.cos(2 * np.pi * grid.x(1))
        np.testing.assert_allclose(phi, solve_complex_laplacian(rhs, grid, coefficient=2.0), atol=1e-8)
        self.assertLess(abs(report.b), 1e-9)

    def test_sigma_two_perturbation_converges(self):
        """Test convergence and clean monitors for a perturbed sigma_2 problem."""
        report = execute_run(sigma_two(), self.out)

        self.assertEqual(report.verdict, 'converged')
        self.assertEqual(report.exit_code, 0)
        self.assertTrue(report.max_principle_ok)
        self.assertTrue(report.gradient_ok)
        self.assertGreater(len(report.deltas), 0)
        self.assertTrue(all(delta < 1 for delta in report.deltas if delta is not None))

    def test_sigma_two_default_periods(self):
        """Test the sigma_2 problem with unit oscillation period: contraction, decay and Cauchy bound."""
        text = SIGMA_TWO.format(K=16, tol=1e-5).replace('amplitude = 0.05', 'amplitude = 0.1')
        text = text.replace('t_max = 3.0', 't_max = 10.0').replace('oscillation_period = 0.125\n', '')
        report = execute_run(parse_config(text), self.out)

        self.assertEqual(report.verdict, 'converged')
        self.assertEqual(report.exit_code, 0)
        self.assertGreaterEqual(report.t_end, 4.0 - 1e-12)
        self.assertGreaterEqual(len(report.deltas), 4)
        measured = [delta for delta in report.deltas if delta is not None]
        self.assertGreater(len(measured), 0)
        self.assertTrue(all(delta < 1 for delta in measured))
        self.assertGreater(report.beta, 0)
        self.assertTrue(report.cauchy_ok)
        self.assertTrue(report.max_principle_ok)
        self.assertTrue(report.gradient_ok)

    def test_row_count(self):
        """Test one diagnostics row per record time."""
        report = execute_run(sigma_two(), self.out)
        rows = read_diagnostics_csv(self.out / 'diagnostics.csv')

        self.assertEqual(len(rows), report.rows)
        self.assertEqual(len(rows), round(report.t_end / 0.0625) + 1)
        times = [row['t'] for row in rows]
        np.testing.assert_allclose(times, 0.0625 * np.arange(len(rows)), atol=1e-12)

    def test_resolution_agreement(self):
        """Test that K = 16 and K = 32 agree on the shared grid points."""
        coarse = execute_run(sigma_two(K=16, tol=1e-9), self.out / 'coarse')
        fine = execute_run(sigma_two(K=32, tol=1e-9), self.out / 'fine')
        self.assertEqual(coarse.verdict, 'converged')
        self.assertEqual(fine.verdict, 'converged')

        phi16 = read_field(self.out / 'coarse' / 'phi_final.bin', shape=(16, 1, 1, 1, 1, 1)).values
        phi32 = read_field(self.out / 'fine' / 'phi_final.bin', shape=(32, 1, 1, 1, 1, 1)).values
        np.testing.assert_allclose(phi32[::2], phi16, atol=1e-6)
        self.assertAlmostEqual(coarse.b, fine.b, places=6)

    @patch('config.PARALLEL_MIN_POINTS', 1)
    def test_threads_do_not_change_results(self):
        """Test that one and two worker threads give the same run."""
        one = execute_run(sigma_two(), self.out / 'one', threads=1)
        two = execute_run(sigma_two(), self.out / 'two', threads=2)

        self.assertEqual(one.rows, two.rows)
        self.assertAlmostEqual(one.t_end, two.t_end, places=12)
        for name in ('phi_final.bin', 'phi_t_final.bin'):
            np.testing.assert_allclose(read_field(self.out / 'two' / name).values,
                                       read_field(self.out / 'one' / name).values, atol=1e-12)


class TestPropertySuites(unittest.TestCase):
    """Integration tests for the randomized property run."""

    def test_full_sample_count(self):
        """Test that every suite passes at the default sample count."""
        report = check_lemmas(3, 2, samples=10000, seed=7)

        self.assertTrue(report.passed, '\n'.join(report.lines()))


if __name__ == '__main__':
    unittest.main()
