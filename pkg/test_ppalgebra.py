"""
Unit tests for the (p,p)-form algebra.
"""
import unittest

import numpy as np

from errors import ArgumentError, DomainError
from multiindex import enumerate_table
from ppalgebra import (assemble_Z, compound, eigen_pp, exterior_oracle, metric_pp,
                       orthonormal_frame, wedge_contribution)


def _random_hermitian(rng, size):
    A = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
    return 0.5 * (A + A.conj().T)


def _hermitian_part(M):
    return 0.5 * (M + M.conj().T)


class TestWedgeContribution(unittest.TestCase):
    """Test cases for h -> h ^ omega^{p-1}."""

    def setUp(self):
        self.table = enumerate_table(3, 2)
        self.rng = np.random.default_rng(11)

    def test_identity_maps_to_p_identity(self):
        """Test omega ^ omega^{p-1} = p * identity."""
        np.testing.assert_allclose(wedge_contribution(np.eye(3), self.table), 2 * np.eye(3))

    def test_diagonal_sums(self):
        """Test that diagonal entries are index sums of h_ii."""
        Z = wedge_contribution(np.diag([1.0, 2.0, 3.0]), self.table)
        np.testing.assert_allclose(Z, np.diag([3.0, 4.0, 5.0]))

    def test_off_diagonal_sign(self):
        """Test the signed placement of h_12 at ((1,3), (2,3))."""
        h = np.zeros((3, 3), dtype=complex)
        h[0, 1] = 0.5 + 0.25j
        h[1, 0] = np.conj(h[0, 1])
        Z = wedge_contribution(h, self.table)
        self.assertAlmostEqual(Z[1, 2], 0.5 + 0.25j)
        self.assertAlmostEqual(Z[2, 1], 0.5 - 0.25j)
        self.assertEqual(Z[0, 0], 0)

    def test_matches_exterior_oracle(self):
        """Test the closed form against the brute-force exterior product."""
        for p in (1, 2, 3):
            table = enumerate_table(3, p)
            for _ in range(5):
                h = _random_hermitian(self.rng, 3)
                with self.subTest(p=p):
                    np.testing.assert_allclose(wedge_contribution(h, table),
                                               exterior_oracle(h, table), atol=1e-12)

    def test_oracle_adds_X(self):
        """Test that X coefficients are added on top."""
        Z = exterior_oracle(np.eye(3), self.table, {((1, 2), (1, 2)): 1.5})
        self.assertAlmostEqual(Z[0, 0].real, 3.5)

    def test_oracle_rejects_large_n(self):
        """Test that the oracle only covers n <= 3."""
        with self.assertRaises(ArgumentError):
            exterior_oracle(np.eye(4), enumerate_table(4, 2))

    def test_batched_input(self):
        """Test that leading axes are treated as a batch."""
        stack = np.stack([_random_hermitian(self.rng, 3) for _ in range(4)])
        out = wedge_contribution(stack, self.table)
        self.assertEqual(out.shape, (4, 3, 3))
        np.testing.assert_allclose(out[2], wedge_contribution(stack[2], self.table))

    def test_wrong_shape(self):
        """Test that a mismatched h is rejected."""
        with self.assertRaises(ArgumentError):
            wedge_contribution(np.eye(4), self.table)

    def test_assemble_Z(self):
        """Test Z = X + h ^ omega^{p-1} and the shape check."""
        X = np.diag([1.0, 0.0, -1.0])
        np.testing.assert_allclose(assemble_Z(X, np.eye(3), self.table), np.diag([3.0, 2.0, 1.0]))
        with self.assertRaises(ArgumentError):
            assemble_Z(np.eye(2), np.eye(3), self.table)


class TestMetricAndCompound(unittest.TestCase):
    """Test cases for the induced metric."""

    def test_metric_of_identity(self):
        """Test that the flat metric induces the identity."""
        np.testing.assert_allclose(metric_pp(np.eye(3), enumerate_table(3, 2)), np.eye(3))

    def test_metric_of_diagonal(self):
        """Test products of diagonal entries."""
        omega = metric_pp(np.diag([1.0, 2.0, 3.0]), enumerate_table(3, 2))
        np.testing.assert_allclose(omega, np.diag([2.0, 3.0, 6.0]))

    def test_full_compound_is_determinant(self):
        """Test that the n-th compound is the determinant."""
        rng = np.random.default_rng(3)
        A = rng.normal(size=(3, 3))
        self.assertAlmostEqual(compound(A, enumerate_table(3, 3))[0, 0], np.linalg.det(A))

    def test_metric_not_positive(self):
        """Test that an indefinite metric is a domain error."""
        with self.assertRaises(DomainError):
            metric_pp(np.diag([1.0, -1.0, 1.0]), enumerate_table(3, 2))

    def test_frame_reduces_metric(self):
        """Test that the Cholesky frame maps g to the identity."""
        rng = np.random.default_rng(5)
        A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        g = A @ A.conj().T + 3 * np.eye(3)
        frame = orthonormal_frame(g)
        np.testing.assert_allclose(frame.to_frame_11(g), np.eye(3), atol=1e-12)
        table = enumerate_table(3, 2)
        np.testing.assert_allclose(frame.to_frame_pp(metric_pp(g, table), table), np.eye(3), atol=1e-12)


class TestEigenPP(unittest.TestCase):
    """Test cases for the generalized eigenproblem."""

    def test_diagonal_spectrum(self):
        """Test pair sums of diag(1, 2, 3)."""
        Z = wedge_contribution(np.diag([1.0, 2.0, 3.0]), enumerate_table(3, 2))
        np.testing.assert_allclose(eigen_pp(Z).values, [3.0, 4.0, 5.0])

    def test_relative_to_metric(self):
        """Test that Z = 2 omega_pp has every eigenvalue 2."""
        table = enumerate_table(3, 2)
        omega = metric_pp(np.diag([1.0, 2.0, 3.0]), table)
        np.testing.assert_allclose(eigen_pp(2 * omega, omega).values, [2.0, 2.0, 2.0])

    def test_reconstruct_and_phases(self):
        """Test P diag P* = Z and the phase convention of the basis."""
        rng = np.random.default_rng(9)
        Z = _random_hermitian(rng, 6)
        spectrum = eigen_pp(Z)
        np.testing.assert_allclose(spectrum.reconstruct(), Z, atol=1e-12)
        first = spectrum.basis[0]
        np.testing.assert_allclose(np.imag(first), 0.0, atol=1e-12)
        self.assertTrue(np.all(np.real(first) > 0))
        np.testing.assert_allclose(spectrum.basis.conj().T @ spectrum.basis, np.eye(6), atol=1e-12)

    def test_congruence_invariance(self):
        """Test that A* Z A and A* omega A, with A acting on (p,p)-forms, keep the spectrum."""
        rng = np.random.default_rng(21)
        for n, p in ((3, 2), (4, 2), (5, 3)):
            table = enumerate_table(n, p)
            A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)) + 2 * np.eye(n)
            B = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            g = B @ B.conj().T + n * np.eye(n)
            omega = metric_pp(g, table)
            Z = _random_hermitian(rng, table.N)
            C = compound(A, table)

            moved_omega = _hermitian_part(C.conj().T @ omega @ C)
            np.testing.assert_allclose(moved_omega, metric_pp(A.conj().T @ g @ A, table),
                                       rtol=1e-10, atol=1e-10 * np.max(np.abs(moved_omega)))
            before = eigen_pp(Z, omega).values
            after = eigen_pp(_hermitian_part(C.conj().T @ Z @ C), moved_omega).values
            np.testing.assert_allclose(after, before, atol=1e-9 * max(1.0, np.max(np.abs(before))))

    def test_non_hermitian(self):
        """Test that a non-Hermitian form is a domain error."""
        with self.assertRaises(DomainError):
            eigen_pp(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_metric_not_positive(self):
        """Test that an indefinite omega_pp is a domain error."""
        with self.assertRaises(DomainError):
            eigen_pp(np.eye(2), np.diag([1.0, -1.0]))


if __name__ == '__main__':
    unittest.main()
