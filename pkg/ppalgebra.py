"""
Hermitian multilinear algebra of real (p,p)-forms.

A (1,1)-form is stored as its n x n coefficient matrix h_{ij}, a (p,p)-form as
its N x N matrix Z_{IJ} in the basis dz_I ^ dz-bar_J with rows ordered by the
MultiIndexTable. Every function accepts stacked inputs: the matrix sits in the
last two axes and any leading axes are treated as a batch of points.

Normalization: the (1,1) -> (p,p) map h -> h ^ omega^{p-1} is taken relative to
the basis (p-1)! (sqrt(-1))^{p^2} dz_I ^ dz-bar_J, under which omega ^ omega^{p-1}
has coefficient matrix p * identity and the eigenvalues of h ^ omega^{p-1} are
the p-fold sums of the eigenvalues of h. Only eigenvalues are consumed
downstream, so any common rescaling of forms and metric leaves them unchanged.
"""
import itertools
from dataclasses import dataclass
from math import factorial
from typing import Dict, Optional, Tuple

import numpy as np

from errors import ArgumentError, DomainError
from multiindex import MultiIndex, MultiIndexTable

HERMITIAN_RTOL = 1e-12


def _as_square(matrix, size: int, name: str) -> np.ndarray:
    array = np.asarray(matrix)
    if array.ndim < 2 or array.shape[-2:] != (size, size):
        raise ArgumentError(f"{name} must have trailing shape ({size}, {size}), got {array.shape}")
    return array


def dagger(matrix: np.ndarray) -> np.ndarray:
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(matrix, -1, -2))


def hermitian_defect(matrix: np.ndarray) -> np.ndarray:
    """Per-matrix relative distance from Hermitian, ||A - A*|| / max(||A||, tiny)."""
    matrix = np.asarray(matrix)
    diff = np.linalg.norm(matrix - dagger(matrix), axis=(-2, -1))
    scale = np.linalg.norm(matrix, axis=(-2, -1))
    return diff / np.maximum(scale, np.finfo(float).tiny)


def symmetrize(matrix: np.ndarray, name: str = "matrix") -> np.ndarray:
    """
    Return (A + A*)/2 after checking A is Hermitian within HERMITIAN_RTOL.

    Raises:
        DomainError: If any matrix in the stack is further from Hermitian
    """
    matrix = np.asarray(matrix, dtype=complex)
    defect = hermitian_defect(matrix)
    if np.any(defect > HERMITIAN_RTOL):
        raise DomainError(f"{name} is not Hermitian (relative defect {float(np.max(defect)):.3e})")
    return 0.5 * (matrix + dagger(matrix))


def _cholesky(matrix: np.ndarray, name: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        raise DomainError(f"{name} is not positive definite")


def compound(matrix, table: MultiIndexTable) -> np.ndarray:
    """
    p-th compound matrix: entry (I, J) is the p x p minor with rows I, columns J.

    Args:
        matrix: (..., n, n) array
        table: Index table for (n, p)

    Returns:
        (..., N, N) array of minors
    """
    matrix = _as_square(matrix, table.n, "matrix")
    rows = np.asarray(table.indices, dtype=np.intp) - 1
    sub = matrix[..., rows[:, None, :, None], rows[None, :, None, :]]
    return np.linalg.det(sub)


def metric_pp(g, table: MultiIndexTable) -> np.ndarray:
    """
    Induced metric matrix omega_{IJ} = det(g_{i_k j_l}) on (p,p)-forms.

    Raises:
        DomainError: If g is not Hermitian positive definite
    """
    g = symmetrize(_as_square(g, table.n, "g"), "g")
    _cholesky(g, "g")
    return compound(g, table)


def wedge_contribution(h, table: MultiIndexTable) -> np.ndarray:
    """
    Coefficient matrix of h ^ omega^{p-1} in an orthonormal frame.

    Diagonal entries are sums of h_{ii} over i in I, entries with |I n J| = p-1
    carry (-1)^{(i|I)+(j|J)} h_{ij}, the rest vanish. Computed block by block
    over the (p-1)-indices I'.

    Args:
        h: (..., n, n) coefficient matrix
        table: Index table for (n, p)

    Returns:
        (..., N, N) complex array
    """
    h = _as_square(h, table.n, "h")
    out = np.zeros(h.shape[:-2] + (table.N, table.N), dtype=complex)
    for block in table.blocks:
        free, rows, signs = block.free, block.rows, block.signs
        weight = signs[:, None] * signs[None, :]
        out[..., rows[:, None], rows[None, :]] += weight * h[..., free[:, None], free[None, :]]
    return out


def assemble_Z(X, h, table: MultiIndexTable) -> np.ndarray:
    """
    Z = X + h ^ omega^{p-1}, both in a common orthonormal frame.

    Raises:
        ArgumentError: If X and h do not match the table or each other
    """
    X = _as_square(X, table.N, "X")
    h = _as_square(h, table.n, "h")
    try:
        np.broadcast_shapes(X.shape[:-2], h.shape[:-2])
    except ValueError:
        raise ArgumentError(f"batch shapes of X {X.shape} and h {h.shape} differ")
    return X + wedge_contribution(h, table)


@dataclass(frozen=True, eq=False)
class OrthonormalFrame:
    """
    Lower-triangular L with L L* = g, and the maps into the frame it defines.

    Generalized eigenvalues with respect to g (or omega_pp = compound(g)) equal
    ordinary eigenvalues after the transform.
    """
    L: np.ndarray

    def to_frame_11(self, h) -> np.ndarray:
        """h -> L^{-1} h L^{-*}."""
        return _congruence_inverse(self.L, np.asarray(h, dtype=complex))

    def to_frame_pp(self, X, table: MultiIndexTable) -> np.ndarray:
        """X -> C X C* with C = compound(L^{-1}), the induced frame on (p,p)-forms."""
        return _congruence_inverse(compound(self.L, table), np.asarray(X, dtype=complex))


def _congruence_inverse(L: np.ndarray, A: np.ndarray) -> np.ndarray:
    # L^{-1} A L^{-*} via two solves; A Hermitian
    left = np.linalg.solve(L, A)
    return dagger(np.linalg.solve(L, dagger(left)))


def orthonormal_frame(g) -> OrthonormalFrame:
    """
    Cholesky frame of a Hermitian positive definite metric.

    Raises:
        DomainError: If g is not positive definite
    """
    g = np.asarray(g)
    if g.ndim < 2 or g.shape[-1] != g.shape[-2]:
        raise ArgumentError(f"g must be square, got shape {g.shape}")
    g = symmetrize(g, "g")
    return OrthonormalFrame(L=_cholesky(g, "g"))


@dataclass(frozen=True, eq=False)
class SpectrumPP:
    """
    Eigenvalues of a (p,p)-form with respect to omega_pp.

    Attributes:
        values: (..., N) real, ascending
        basis: (..., N, N) unitary, columns are eigenvectors in the reduced frame
        frame: (..., N, N) lower-triangular Cholesky factor of omega_pp
    """
    values: np.ndarray
    basis: np.ndarray
    frame: np.ndarray

    def reconstruct(self) -> np.ndarray:
        """P diag(values) P*, the frame-transformed form."""
        return (self.basis * self.values[..., None, :]) @ dagger(self.basis)


def _fix_phases(vectors: np.ndarray) -> np.ndarray:
    # First component with modulus above 1e-12 made real positive
    magnitude = np.abs(vectors)
    first = np.argmax(magnitude > 1e-12, axis=-2)
    pivot = np.take_along_axis(vectors, first[..., None, :], axis=-2)
    phase = pivot / np.maximum(np.abs(pivot), np.finfo(float).tiny)
    return vectors / phase


def eigen_pp(Z, omega_pp=None) -> SpectrumPP:
    """
    Roots of det(Z - lambda omega_pp) = 0 by Cholesky reduction.

    Args:
        Z: (..., N, N) Hermitian form
        omega_pp: (..., N, N) positive definite metric; None means the identity
            (an orthonormal frame, as on the flat torus)

    Returns:
        SpectrumPP with ascending eigenvalues and a unitary eigenbasis whose
        first significant component is real positive

    Raises:
        DomainError: If Z is not Hermitian or omega_pp not positive definite
    """
    Z = np.asarray(Z)
    if Z.ndim < 2 or Z.shape[-1] != Z.shape[-2]:
        raise ArgumentError(f"Z must be square, got shape {Z.shape}")
    Z = symmetrize(Z, "Z")
    size = Z.shape[-1]

    if omega_pp is None:
        L = np.broadcast_to(np.eye(size, dtype=complex), Z.shape)
        reduced = Z
    else:
        omega_pp = symmetrize(_as_square(omega_pp, size, "omega_pp"), "omega_pp")
        L = _cholesky(omega_pp, "omega_pp")
        reduced = _congruence_inverse(L, Z)
        reduced = 0.5 * (reduced + dagger(reduced))

    values, vectors = np.linalg.eigh(reduced)
    return SpectrumPP(values=values, basis=_fix_phases(vectors), frame=L)


def _wedge_monomials(left: Dict[Tuple[int, ...], complex],
                     right: Dict[Tuple[int, ...], complex]) -> Dict[Tuple[int, ...], complex]:
    product: Dict[Tuple[int, ...], complex] = {}
    for a, ca in left.items():
        for b, cb in right.items():
            word = a + b
            if len(set(word)) < len(word):
                continue
            # parity of the sorting permutation
            inversions = sum(1 for x, y in itertools.combinations(word, 2) if x > y)
            key = tuple(sorted(word))
            product[key] = product.get(key, 0.0) + (-1) ** inversions * ca * cb
    return product


def exterior_oracle(h, table: MultiIndexTable,
                    X_coords: Optional[Dict[Tuple[MultiIndex, MultiIndex], complex]] = None) -> np.ndarray:
    """
    Brute-force coefficient matrix of h ^ omega^{p-1} (+ X) in the full exterior algebra.

    Generators are dz_1..dz_n (ids 0..n-1) and dz-bar_1..dz-bar_n (ids n..2n-1).
    The product is expanded monomial by monomial with explicit permutation signs
    and read off against (p-1)! (sqrt(-1))^{p^2} dz_I ^ dz-bar_J.

    Args:
        h: (n, n) coefficient matrix of sqrt(-1) h_{ij} dz_i ^ dz-bar_j
        table: Index table, n <= 3
        X_coords: Optional coefficients {(I, J): X_IJ} added on top

    Raises:
        ArgumentError: For n > 3
    """
    n, p = table.n, table.p
    if n > 3:
        raise ArgumentError("exterior_oracle supports n <= 3 only")
    h = np.asarray(_as_square(h, n, "h"), dtype=complex)
    if h.ndim != 2:
        raise ArgumentError("exterior_oracle takes a single matrix")

    form = {(i, n + j): 1j * h[i, j] for i in range(n) for j in range(n) if h[i, j] != 0}
    omega = {(k, n + k): 1j for k in range(n)}
    for _ in range(p - 1):
        form = _wedge_monomials(form, omega)

    normalization = factorial(p - 1) * (1j ** (p * p))
    out = np.zeros((table.N, table.N), dtype=complex)
    for r, index_i in enumerate(table.indices):
        for c, index_j in enumerate(table.indices):
            key = tuple(i - 1 for i in index_i) + tuple(n + j - 1 for j in index_j)
            out[r, c] = form.get(key, 0.0) / normalization
    for (index_i, index_j), value in (X_coords or {}).items():
        out[table.rank_of(index_i) - 1, table.rank_of(index_j) - 1] += value
    return out
