"""
Unit tests for the linearization chain.
"""
import unittest

import numpy as np
from scipy.stats import unitary_group

from conefun import ConeFunction, eval_f, grad_f
from errors import ArgumentError, ConfigurationError, DomainError
from linop import (PointData, contract, f_matrix, g_matrix_contraction, g_matrix_direct,
                   lin_coefficients, refined_floor, unitary_submatrix_sum)
from multiindex import enumerate_table
from ppalgebra import eigen_pp
from torusflow import FlowState, Scenario, XForm
from torusgrid import TorusGrid


SQRT47 = np.sqrt(47.0)


class TestFMatrix(unittest.TestCase):
    """Test cases for F = P diag(grad f) P*."""

    def test_diagonal_sigma_two(self):
        """Test F at Z = diag(3, 4, 5) for sigma_2 root."""
        f = ConeFunction('sigma_k_root', 2, 3)
        spectrum = eigen_pp(np.diag([3.0, 4.0, 5.0]))
        F = f_matrix(spectrum, grad_f(f, spectrum.values))
        np.testing.assert_allclose(F, np.diag([9.0, 8.0, 7.0]) / (2 * SQRT47), atol=1e-14)

    def test_trace_function_gives_identity(self):
        """Test that sigma_1 has F = identity for any Z."""
        rng = np.random.default_rng(2)
        A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        Z = A @ A.conj().T + np.eye(3)
        spectrum = eigen_pp(Z)
        F = f_matrix(spectrum, grad_f(ConeFunction('sigma_k_root', 1, 3), spectrum.values))
        np.testing.assert_allclose(F, np.eye(3), atol=1e-12)

    def test_first_variation(self):
        """Test df = tr(F dZ) against a difference quotient."""
        rng = np.random.default_rng(8)
        f = ConeFunction('sigma_k_root', 2, 3)
        A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        Z = 0.3 * (A + A.conj().T) + 4 * np.eye(3)
        B = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        dZ = 0.5 * (B + B.conj().T)
        spectrum = eigen_pp(Z)
        F = f_matrix(spectrum, grad_f(f, spectrum.values))

        def value(M):
            return float(eval_f(f, eigen_pp(M).values))

        step = 1e-6
        numeric = (value(Z + step * dZ) - value(Z - step * dZ)) / (2 * step)
        self.assertAlmostEqual(float(np.real(contract(F, dZ))), numeric, places=7)

    def test_gradient_shape_mismatch(self):
        """Test that a wrong gradient shape is rejected."""
        with self.assertRaises(ArgumentError):
            f_matrix(eigen_pp(np.eye(3)), np.ones(2))


class TestGMatrix(unittest.TestCase):
    """Test cases for the contraction F -> G."""

    def setUp(self):
        self.table = enumerate_table(3, 2)

    def test_identity(self):
        """Test that F = identity contracts to p * identity."""
        np.testing.assert_allclose(g_matrix_contraction(np.eye(3), self.table), 2 * np.eye(3))

    def test_diagonal_sigma_two(self):
        """Test G for the sigma_2 root example."""
        F = np.diag([9.0, 8.0, 7.0]) / (2 * SQRT47)
        np.testing.assert_allclose(g_matrix_contraction(F, self.table),
                                   np.diag([17.0, 16.0, 15.0]) / (2 * SQRT47))

    def test_degree_one_is_identity_map(self):
        """Test that G = F when p = 1."""
        rng = np.random.default_rng(1)
        A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        F = A + A.conj().T
        np.testing.assert_allclose(g_matrix_contraction(F, enumerate_table(3, 1)), F)

    def test_two_assemblies_agree(self):
        """Test the block contraction against the pairwise assembly."""
        rng = np.random.default_rng(6)
        for n, p in ((3, 2), (4, 2), (4, 3), (5, 3)):
            table = enumerate_table(n, p)
            A = rng.normal(size=(table.N, table.N)) + 1j * rng.normal(size=(table.N, table.N))
            F = A + A.conj().T
            with self.subTest(n=n, p=p):
                np.testing.assert_allclose(g_matrix_contraction(F, table),
                                           g_matrix_direct(F, table), atol=1e-12)

    def test_trace_identity(self):
        """Test tr G = p tr F."""
        rng = np.random.default_rng(7)
        table = enumerate_table(4, 2)
        A = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        F = A @ A.conj().T
        self.assertAlmostEqual(float(np.real(np.trace(g_matrix_contraction(F, table)))),
                               float(2 * np.real(np.trace(F))), places=10)

    def test_zero(self):
        """Test that F = 0 gives G = 0."""
        np.testing.assert_array_equal(g_matrix_contraction(np.zeros((3, 3)), self.table), 0)

    def test_wrong_shape(self):
        """Test that F of the wrong size is rejected."""
        with self.assertRaises(ArgumentError):
            g_matrix_contraction(np.eye(4), self.table)

    def test_refined_floor(self):
        """Test the C(n-1, p-1)-th smallest eigenvalue."""
        F = np.diag([9.0, 8.0, 7.0]) / (2 * SQRT47)
        self.assertAlmostEqual(float(refined_floor(F, 3, 2)), 8.0 / (2 * SQRT47))
        self.assertAlmostEqual(float(refined_floor(np.eye(3), 3, 2)), 1.0)

    def test_refined_floor_bounds_G(self):
        """Test lambda_min(G) >= the refined floor on random positive F."""
        rng = np.random.default_rng(12)
        table = enumerate_table(4, 2)
        for _ in range(20):
            A = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
            F = A @ A.conj().T
            G = g_matrix_contraction(F, table)
            self.assertGreaterEqual(np.linalg.eigvalsh(G)[0], refined_floor(F, 4, 2) - 1e-10)


class TestUnitarySubmatrix(unittest.TestCase):
    """Test cases for block sums of unitary matrices."""

    def test_identity_block(self):
        """Test a block of the identity."""
        self.assertAlmostEqual(unitary_submatrix_sum(np.eye(3), [1, 2], [2, 3]), 1.0)

    def test_full_columns(self):
        """Test that complete columns sum to their count."""
        B = unitary_group.rvs(4, random_state=3)
        self.assertAlmostEqual(unitary_submatrix_sum(B, [1, 2, 3, 4], [2, 4]), 2.0)

    def test_not_unitary(self):
        """Test that a non-unitary matrix is a domain error."""
        with self.assertRaises(DomainError):
            unitary_submatrix_sum(2 * np.eye(3), [1], [1])

    def test_out_of_range(self):
        """Test 1-based range checking."""
        with self.assertRaises(ArgumentError):
            unitary_submatrix_sum(np.eye(3), [0], [1])
        with self.assertRaises(ArgumentError):
            unitary_submatrix_sum(np.eye(3), [1], [4])


class TestLinCoefficients(unittest.TestCase):
    """Test cases for the lower-order coefficients."""

    def setUp(self):
        self.table = enumerate_table(3, 2)
        self.grid = TorusGrid.build(3, 8, [False] * 6)
        self.cone = ConeFunction('sigma_k_root', 1, 3)

    def _point(self, scenario):
        state = FlowState.at(np.zeros(self.grid.shape), 0.0, scenario, with_F=True)
        return PointData(phi=state.phi, zeta=state.zeta, coords=self.grid.coords,
                         F=state.kernel.F, G=state.kernel.G)

    def test_gradient_term_in_psi(self):
        """Test B_alpha = -a/2 for psi = c + Re(a . zeta)."""
        a = np.array([1.0 + 2.0j, 0.0, -0.5j])
        scenario = Scenario(grid=self.grid, table=self.table, cone=self.cone,
                            X=XForm.zero(self.table), psi_constant=6.0, psi_a=a)
        coefficients = lin_coefficients(scenario, self._point(scenario))
        np.testing.assert_allclose(coefficients.B_alpha.reshape(-1, 3)[0], -0.5 * a)
        np.testing.assert_allclose(coefficients.B_phi, 0.0)
        np.testing.assert_allclose(coefficients.B_k, 0.0)

    def test_gradient_term_in_X(self):
        """Test B_alpha = tr(F Theta) a/2 for a gradient-linear X."""
        theta = np.diag([1.0, 0.0, 0.0]).astype(complex)
        X = XForm(kind='gradient_linear', omega0=np.zeros((3, 3), dtype=complex), theta=theta,
                  a=np.array([1.0, 0.0, 0.0], dtype=complex))
        scenario = Scenario(grid=self.grid, table=self.table, cone=self.cone, X=X, psi_constant=6.0)
        coefficients = lin_coefficients(scenario, self._point(scenario))
        np.testing.assert_allclose(coefficients.B_alpha.reshape(-1, 3)[0], [0.5, 0.0, 0.0])

    def test_missing_derivatives(self):
        """Test that a scenario without derivatives is a configuration error."""
        point = PointData(phi=np.zeros(1), zeta=np.zeros((1, 3)), coords=np.zeros((1, 3)),
                          F=np.eye(3)[None], G=np.eye(3)[None])
        with self.assertRaises(ConfigurationError):
            lin_coefficients(object(), point)


if __name__ == '__main__':
    unittest.main()
