"""
Linearization chain f -> F -> G and the lower-order coefficients of the
linearized operator.

Convention: F and G are the gradients of f(Lambda(Z)) in the pairing
<A, dB> = tr(A dB), so that df = tr(F dZ) and df = tr(G dh) for Z = X + h ^ omega^{p-1}.
With that pairing the contraction G = adjoint of the wedge map uses the same
insertion blocks as ppalgebra.wedge_contribution.
"""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import comb

from errors import ArgumentError, ConfigurationError, DomainError
from multiindex import MultiIndexTable, sign_exponent
from ppalgebra import SpectrumPP, dagger

UNITARY_ATOL = 1e-10


def contract(A, dB) -> np.ndarray:
    """tr(A dB) over the last two axes, batched."""
    A = np.asarray(A)
    dB = np.asarray(dB)
    if A.shape[-2:] != dB.shape[-2:] or A.shape[-1] != A.shape[-2]:
        raise ArgumentError(f"cannot pair shapes {A.shape} and {dB.shape}")
    return np.einsum('...ji,...ij->...', A, dB)


def f_matrix(spectrum: SpectrumPP, grad) -> np.ndarray:
    """
    F = P diag(grad) P*, pulled back from the reduced frame to the coordinates
    of Z (a no-op when omega_pp is the identity).

    Args:
        spectrum: Eigen-decomposition of Z
        grad: (..., N) gradient of f at spectrum.values

    Returns:
        (..., N, N) Hermitian array

    Raises:
        ArgumentError: If grad does not match the spectrum
    """
    grad = np.asarray(grad, dtype=float)
    if grad.shape != spectrum.values.shape:
        raise ArgumentError(f"gradient shape {grad.shape} does not match spectrum {spectrum.values.shape}")
    P = spectrum.basis
    reduced = (P * grad[..., None, :]) @ dagger(P)
    # L^{-*} F L^{-1}
    L_dagger = dagger(spectrum.frame)
    left = np.linalg.solve(L_dagger, reduced)
    F = dagger(np.linalg.solve(L_dagger, dagger(left)))
    return 0.5 * (F + dagger(F))


def g_matrix_contraction(F, table: MultiIndexTable) -> np.ndarray:
    """
    G_{ij} = sum over (p-1)-indices I' avoiding i, j of
    (-1)^{(i|I'_i)+(j|I'_j)} F_{I'_i I'_j}.

    Args:
        F: (..., N, N) array
        table: Index table for (n, p)

    Returns:
        (..., n, n) array
    """
    F = np.asarray(F)
    if F.shape[-2:] != (table.N, table.N):
        raise ArgumentError(f"F must have trailing shape ({table.N}, {table.N}), got {F.shape}")
    G = np.zeros(F.shape[:-2] + (table.n, table.n), dtype=np.result_type(F.dtype, float))
    for block in table.blocks:
        free, rows, signs = block.free, block.rows, block.signs
        weight = signs[:, None] * signs[None, :]
        G[..., free[:, None], free[None, :]] += weight * F[..., rows[:, None], rows[None, :]]
    return G


def g_matrix_direct(F, table: MultiIndexTable) -> np.ndarray:
    """
    G assembled pair by pair: the diagonal collects F_{II} over I containing i,
    off-diagonal entries come from pairs (I, J) with |I n J| = p - 1.
    """
    F = np.asarray(F)
    if F.shape[-2:] != (table.N, table.N):
        raise ArgumentError(f"F must have trailing shape ({table.N}, {table.N}), got {F.shape}")
    G = np.zeros(F.shape[:-2] + (table.n, table.n), dtype=np.result_type(F.dtype, float))
    for r, index_i in enumerate(table.indices):
        for c, index_j in enumerate(table.indices):
            if r == c:
                for i in index_i:
                    G[..., i - 1, i - 1] += F[..., r, r]
                continue
            only_i = set(index_i) - set(index_j)
            only_j = set(index_j) - set(index_i)
            if len(only_i) != 1:
                continue
            i, j = only_i.pop(), only_j.pop()
            G[..., i - 1, j - 1] += sign_exponent(i, index_i, j, index_j) * F[..., r, c]
    return G


def refined_floor(F, n: int, p: int) -> np.ndarray:
    """
    The alpha-th smallest eigenvalue of F, alpha = pN/n = C(n-1, p-1).

    lambda_min(G) is bounded below by this value.
    """
    F = np.asarray(F)
    alpha = int(comb(n - 1, p - 1, exact=True))
    values = np.linalg.eigvalsh(F)
    if values.shape[-1] < alpha:
        raise ArgumentError(f"F of size {values.shape[-1]} is too small for n={n}, p={p}")
    return values[..., alpha - 1]


def unitary_submatrix_sum(B, rows: Sequence[int], cols: Sequence[int]) -> float:
    """
    Sum of |b_ij|^2 over the rows x cols block (1-based indices).

    Raises:
        DomainError: If B is not unitary within UNITARY_ATOL
        ArgumentError: If an index is out of range
    """
    B = np.asarray(B, dtype=complex)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ArgumentError(f"B must be square, got shape {B.shape}")
    size = B.shape[0]
    defect = np.max(np.abs(dagger(B) @ B - np.eye(size)))
    if defect > UNITARY_ATOL:
        raise DomainError(f"B is not unitary (defect {defect:.3e})")
    row_index = np.asarray(list(rows), dtype=np.intp)
    col_index = np.asarray(list(cols), dtype=np.intp)
    for name, index in (('rows', row_index), ('cols', col_index)):
        if np.any(index < 1) or np.any(index > size):
            raise ArgumentError(f"{name} must lie in [1, {size}]")
    block = B[np.ix_(row_index - 1, col_index - 1)]
    return float(np.sum(np.abs(block) ** 2))


@dataclass(frozen=True, eq=False)
class ScenarioDerivatives:
    """
    Analytic derivatives of X, chi and psi at a batch of points.

    Wirtinger derivatives in zeta = (d phi / d z_alpha) and in z_k, so that a
    real datum D varies by D_phi du + 2 Re(D_zeta . d zeta) + 2 Re(D_z . dz).

    Attributes:
        X_phi: (..., N, N)
        X_zeta, X_z: (..., n, N, N)
        chi_phi: (..., n, n)
        chi_zeta, chi_z: (..., n, n, n)
        psi_phi: (...)
        psi_zeta, psi_z: (..., n)
    """
    X_phi: np.ndarray
    X_zeta: np.ndarray
    X_z: np.ndarray
    chi_phi: np.ndarray
    chi_zeta: np.ndarray
    chi_z: np.ndarray
    psi_phi: np.ndarray
    psi_zeta: np.ndarray
    psi_z: np.ndarray


@dataclass(frozen=True, eq=False)
class PointData:
    """State of a batch of points the coefficients are evaluated at."""
    phi: np.ndarray
    zeta: np.ndarray
    coords: np.ndarray
    F: np.ndarray
    G: np.ndarray


@dataclass(frozen=True, eq=False)
class LinCoefficients:
    """B_phi (...), B_k (..., n) and B_alpha (..., n) of the linearized operator."""
    B_phi: np.ndarray
    B_k: np.ndarray
    B_alpha: np.ndarray


def lin_coefficients(scenario, point: PointData) -> LinCoefficients:
    """
    Lower-order coefficients at the given points:
        B_phi   = tr(F X_phi) + tr(G chi_phi) - psi_phi
        B_alpha = tr(F X_zeta_alpha) + tr(G chi_zeta_alpha) - psi_zeta_alpha
        B_k     = tr(F X_z_k) + tr(G chi_z_k) - psi_z_k

    The linearized operator then reads
        L u = u_t - tr(G ddbar u) - 2 Re(B_alpha d_alpha u)
    and the time derivative phi_t satisfies L phi_t = B_phi phi_t.

    Raises:
        ConfigurationError: If the scenario supplies no derivatives
    """
    derivatives_of = getattr(scenario, 'derivatives', None)
    if not callable(derivatives_of):
        raise ConfigurationError("scenario does not provide analytic derivatives")
    d: Optional[ScenarioDerivatives] = derivatives_of(point.phi, point.zeta, point.coords)
    if d is None:
        raise ConfigurationError("scenario derivatives returned nothing")

    F = point.F
    G = point.G
    B_phi = np.real(contract(F, d.X_phi) + contract(G, d.chi_phi)) - d.psi_phi
    B_alpha = (contract(F[..., None, :, :], d.X_zeta)
               + contract(G[..., None, :, :], d.chi_zeta) - d.psi_zeta)
    B_k = (contract(F[..., None, :, :], d.X_z)
           + contract(G[..., None, :, :], d.chi_z) - d.psi_z)
    return LinCoefficients(B_phi=np.asarray(B_phi, dtype=float),
                           B_k=np.asarray(B_k, dtype=complex),
                           B_alpha=np.asarray(B_alpha, dtype=complex))
