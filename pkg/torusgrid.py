"""
The flat complex torus C^n / (Z + iZ)^n sampled on a uniform grid, with
spectral derivatives.

Real axes are ordered x_1, y_1, x_2, y_2, ... Axes on which nothing depends
may be collapsed to a single sample; derivatives along them vanish.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import fft

from errors import ArgumentError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TorusGrid:
    """
    Uniform grid with K points per active real axis, period 1, metric identity.

    Attributes:
        n: Complex dimension
        K: Points per active real axis, a power of two >= 8
        active: One flag per real axis (x_1, y_1, ..., x_n, y_n)
    """
    n: int
    K: int
    active: Tuple[bool, ...]

    def __post_init__(self):
        if self.n < 1:
            raise ArgumentError(f"n must be positive, got {self.n}")
        if self.K < 8 or self.K & (self.K - 1):
            raise ArgumentError(f"K must be a power of two >= 8, got {self.K}")
        if len(self.active) != 2 * self.n:
            raise ArgumentError(f"need {2 * self.n} axis flags, got {len(self.active)}")

    @classmethod
    def build(cls, n: int, K: int, active: Optional[Sequence[bool]] = None) -> 'TorusGrid':
        flags = tuple(bool(a) for a in active) if active is not None else (True,) * (2 * n)
        return cls(n=int(n), K=int(K), active=flags)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.K if a else 1 for a in self.active)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def active_axes(self) -> Tuple[int, ...]:
        return tuple(a for a, flag in enumerate(self.active) if flag)

    @property
    def n_eff(self) -> int:
        """Complex dimensions with at least one resolved real axis."""
        return sum(1 for j in range(self.n) if self.active[2 * j] or self.active[2 * j + 1])

    @cached_property
    def axes(self) -> Tuple[np.ndarray, ...]:
        """Broadcastable real coordinates, one array per real axis."""
        out = []
        for a, flag in enumerate(self.active):
            line = np.arange(self.K) / self.K if flag else np.zeros(1)
            view = [1] * len(self.active)
            view[a] = line.size
            out.append(line.reshape(view))
        return tuple(out)

    def x(self, j: int) -> np.ndarray:
        """Real part of z_j (1-based) broadcast to the grid shape."""
        return np.broadcast_to(self.axes[2 * (j - 1)], self.shape)

    def y(self, j: int) -> np.ndarray:
        """Imaginary part of z_j (1-based) broadcast to the grid shape."""
        return np.broadcast_to(self.axes[2 * (j - 1) + 1], self.shape)

    @cached_property
    def coords(self) -> np.ndarray:
        """(..., n) complex coordinates z_j = x_j + i y_j."""
        return np.stack([self.x(j) + 1j * self.y(j) for j in range(1, self.n + 1)], axis=-1)

    def wavenumbers(self, axis: int, odd: bool) -> np.ndarray:
        """
        Angular wavenumbers along one axis, shaped to broadcast. For odd-order
        derivatives the Nyquist mode is dropped.
        """
        view = [1] * len(self.active)
        if not self.active[axis]:
            return np.zeros(view)
        k = 2 * np.pi * fft.fftfreq(self.K, d=1.0 / self.K)
        if odd:
            k[self.K // 2] = 0.0
        view[axis] = self.K
        return k.reshape(view)

    def check_field(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != self.shape:
            raise ArgumentError(f"field shape {values.shape} does not match grid {self.shape}")
        return values


def _real_derivatives(phi: np.ndarray, grid: TorusGrid):
    axes = grid.active_axes
    count = len(grid.active)
    first = [np.zeros(grid.shape) for _ in range(count)]
    second = [[np.zeros(grid.shape) for _ in range(count)] for _ in range(count)]
    if not axes:
        return first, second
    spectrum = fft.fftn(phi, axes=axes)
    odd = {a: 1j * grid.wavenumbers(a, odd=True) for a in axes}
    for a in axes:
        first[a] = np.real(fft.ifftn(odd[a] * spectrum, axes=axes))
        second[a][a] = np.real(fft.ifftn(-grid.wavenumbers(a, odd=False) ** 2 * spectrum, axes=axes))
        for b in axes:
            if b > a:
                second[a][b] = np.real(fft.ifftn(odd[a] * odd[b] * spectrum, axes=axes))
                second[b][a] = second[a][b]
    return first, second


def spectral_hessian(phi, grid: TorusGrid) -> Tuple[np.ndarray, np.ndarray]:
    """
    Complex Hessian and gradient of a real field by FFT.

        phi_{j kbar} = 1/4 (phi_{x_j x_k} + phi_{y_j y_k}) + i/4 (phi_{x_j y_k} - phi_{y_j x_k})
        d_j phi      = 1/2 (phi_{x_j} - i phi_{y_j})

    Args:
        phi: Field of grid.shape
        grid: TorusGrid

    Returns:
        (hess, zeta) with shapes grid.shape + (n, n) and grid.shape + (n,)
    """
    phi = grid.check_field(phi)
    first, second = _real_derivatives(phi, grid)
    n = grid.n
    hess = np.empty(grid.shape + (n, n), dtype=complex)
    zeta = np.empty(grid.shape + (n,), dtype=complex)
    for j in range(n):
        xj, yj = 2 * j, 2 * j + 1
        zeta[..., j] = 0.5 * (first[xj] - 1j * first[yj])
        for k in range(n):
            xk, yk = 2 * k, 2 * k + 1
            hess[..., j, k] = (0.25 * (second[xj][xk] + second[yj][yk])
                               + 0.25j * (second[xj][yk] - second[yj][xk]))
    return hess, zeta


def normalize(phi) -> np.ndarray:
    """phi minus its mean over the torus (the volume form is constant)."""
    phi = np.asarray(phi, dtype=float)
    return phi - np.mean(phi)


def solve_complex_laplacian(rhs, grid: TorusGrid, coefficient: float = 1.0) -> np.ndarray:
    """
    Mean-zero u with coefficient * sum_j u_{j jbar} = rhs.

    Raises:
        ArgumentError: If rhs has a non-zero mean or coefficient is zero
    """
    rhs = grid.check_field(rhs)
    if coefficient == 0:
        raise ArgumentError("coefficient must be non-zero")
    mean = float(np.mean(rhs))
    if abs(mean) > 1e-10 * max(1.0, float(np.max(np.abs(rhs)))):
        raise ArgumentError(f"right-hand side must have zero mean, got {mean:.3e}")
    axes = grid.active_axes
    if not axes:
        return np.zeros(grid.shape)
    symbol = sum(grid.wavenumbers(a, odd=False) ** 2 for a in axes)
    symbol = -0.25 * coefficient * np.broadcast_to(symbol, grid.shape)
    spectrum = fft.fftn(rhs, axes=axes)
    safe = np.where(symbol == 0, 1.0, symbol)
    solution = np.where(symbol == 0, 0.0, spectrum / safe)
    return np.real(fft.ifftn(solution, axes=axes))
