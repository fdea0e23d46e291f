"""
The parabolic flow phi_t = f(Lambda(X + (chi + ddbar phi) ^ omega^{p-1})) - psi on the
flat torus: scenario data, the pointwise kernel, explicit Heun stepping with
admissibility checks, adaptive dt and the run loop.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

import config
from conefun import ConeFunction, cone_margin, eval_f, grad_f
from errors import AdmissibilityError, ArgumentError, FlowBreakdownError
from linop import ScenarioDerivatives, f_matrix, g_matrix_contraction
from multiindex import MultiIndexTable
from ppalgebra import SpectrumPP, eigen_pp, symmetrize, wedge_contribution
from torusgrid import TorusGrid, normalize, spectral_hessian

logger = logging.getLogger(__name__)

MAX_HALVINGS = 20
MAX_REPORTED_VIOLATIONS = 100
X_KINDS = ('zero', 'constant_form', 'gradient_linear', 'aeppli')


@dataclass(frozen=True)
class FourierMode:
    """
    A real mode amplitude * cos(2 pi m.x) (or sin), m indexed over the real
    axes x_1, y_1, ..., x_n, y_n.
    """
    amplitude: float
    wave: Tuple[int, ...]
    kind: str = 'cos'

    def __post_init__(self):
        if self.kind not in ('cos', 'sin'):
            raise ArgumentError(f"mode kind must be 'cos' or 'sin', got {self.kind!r}")

    @property
    def coefficient(self) -> complex:
        # value = Re(coefficient * exp(2 pi i m.x))
        return complex(self.amplitude) if self.kind == 'cos' else -1j * self.amplitude

    def mu(self, n: int) -> np.ndarray:
        """mu_j = m_{x_j} - i m_{y_j}; d/dz_j exp(2 pi i m.x) = pi i mu_j exp(...)."""
        m = np.asarray(self.wave, dtype=float)
        return m[0::2][:n] - 1j * m[1::2][:n]

    def phase(self, grid: TorusGrid) -> np.ndarray:
        theta = sum(m * axis for m, axis in zip(self.wave, grid.axes))
        return self.coefficient * np.exp(2j * np.pi * np.broadcast_to(theta, grid.shape))


def check_modes(modes: Sequence[FourierMode], grid: TorusGrid) -> None:
    """
    Raises:
        ArgumentError: If a mode varies along a collapsed axis or reaches the Nyquist frequency
    """
    for mode in modes:
        if len(mode.wave) != 2 * grid.n:
            raise ArgumentError(f"mode {mode.wave} needs {2 * grid.n} wave numbers")
        for axis, m in enumerate(mode.wave):
            if m and not grid.active[axis]:
                raise ArgumentError(f"mode {mode.wave} varies along collapsed axis {axis}")
            if 2 * abs(m) >= grid.K:
                raise ArgumentError(f"mode {mode.wave} is not resolved at K={grid.K}")


def modes_value(modes: Sequence[FourierMode], grid: TorusGrid) -> np.ndarray:
    out = np.zeros(grid.shape)
    for mode in modes:
        out += np.real(mode.phase(grid))
    return out


def modes_dz(modes: Sequence[FourierMode], grid: TorusGrid) -> np.ndarray:
    """(..., n) Wirtinger derivative d/dz_j of the mode sum."""
    out = np.zeros(grid.shape + (grid.n,), dtype=complex)
    for mode in modes:
        out += -np.pi * np.imag(mode.phase(grid))[..., None] * mode.mu(grid.n)
    return out


def modes_ddbar(modes: Sequence[FourierMode], grid: TorusGrid) -> np.ndarray:
    """(..., n, n) complex Hessian of the mode sum."""
    out = np.zeros(grid.shape + (grid.n, grid.n), dtype=complex)
    for mode in modes:
        mu = mode.mu(grid.n)
        out += -np.pi ** 2 * np.real(mode.phase(grid))[..., None, None] * np.outer(mu, np.conj(mu))
    return out


def modes_dz_ddbar(modes: Sequence[FourierMode], grid: TorusGrid) -> np.ndarray:
    """(..., n, n, n) derivative d/dz_l of the complex Hessian, l first."""
    out = np.zeros(grid.shape + (grid.n,) * 3, dtype=complex)
    for mode in modes:
        mu = mode.mu(grid.n)
        tensor = np.einsum('l,j,k->ljk', mu, mu, np.conj(mu))
        out += np.pi ** 3 * np.imag(mode.phase(grid))[..., None, None, None] * tensor
    return out


@dataclass(frozen=True, eq=False)
class XForm:
    """
    The (p,p)-form X[phi] = Omega_0 + Re(a . zeta) Theta.

    'aeppli' carries a gamma coefficient in front of terms built from
    d omega^{p-1}, which vanish on the flat torus, so it evaluates to Omega_0.
    """
    kind: str
    omega0: np.ndarray
    theta: np.ndarray
    a: np.ndarray
    gamma: float = 0.0

    def __post_init__(self):
        if self.kind not in X_KINDS:
            raise ArgumentError(f"unknown X type {self.kind!r}, expected one of {X_KINDS}")

    @classmethod
    def zero(cls, table: MultiIndexTable) -> 'XForm':
        N = table.N
        return cls(kind='zero', omega0=np.zeros((N, N), dtype=complex),
                   theta=np.zeros((N, N), dtype=complex), a=np.zeros(table.n, dtype=complex))

    @property
    def depends_on_gradient(self) -> bool:
        return self.kind == 'gradient_linear' and bool(np.any(self.a)) and bool(np.any(self.theta))

    def evaluate(self, zeta: np.ndarray) -> np.ndarray:
        out = np.broadcast_to(self.omega0, zeta.shape[:-1] + self.omega0.shape)
        if not self.depends_on_gradient:
            return out
        weight = np.real(zeta @ self.a)
        return out + weight[..., None, None] * self.theta


@dataclass(frozen=True, eq=False)
class Scenario:
    """
    Data of one flow problem on a grid.

    chi = chi_c omega + ddbar(sum of chi_modes), psi = psi_constant + sum of
    psi_modes + Re(psi_a . zeta), phi_0 = sum of phi0_modes.
    """
    grid: TorusGrid
    table: MultiIndexTable
    cone: ConeFunction
    X: XForm
    chi_c: float = 1.0
    chi_modes: Tuple[FourierMode, ...] = ()
    psi_constant: float = 0.0
    psi_modes: Tuple[FourierMode, ...] = ()
    psi_a: Optional[np.ndarray] = None
    phi0_modes: Tuple[FourierMode, ...] = ()
    chi: np.ndarray = field(init=False, repr=False)
    psi_base: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.grid.n != self.table.n:
            raise ArgumentError(f"grid dimension {self.grid.n} does not match table n={self.table.n}")
        if self.cone.N != self.table.N:
            raise ArgumentError(f"cone function acts on {self.cone.N} eigenvalues, table has {self.table.N}")
        for modes in (self.chi_modes, self.psi_modes, self.phi0_modes):
            check_modes(modes, self.grid)
        chi = self.chi_c * np.eye(self.grid.n) + modes_ddbar(self.chi_modes, self.grid)
        object.__setattr__(self, 'chi', chi)
        object.__setattr__(self, 'psi_base', self.psi_constant + modes_value(self.psi_modes, self.grid))
        a = np.zeros(self.grid.n, dtype=complex) if self.psi_a is None else np.asarray(self.psi_a, dtype=complex)
        if a.shape != (self.grid.n,):
            raise ArgumentError(f"psi gradient coefficients need shape ({self.grid.n},)")
        object.__setattr__(self, 'psi_a', a)

    @property
    def depends_on_gradient(self) -> bool:
        return self.X.depends_on_gradient or bool(np.any(self.psi_a))

    def X_of(self, zeta: np.ndarray) -> np.ndarray:
        return self.X.evaluate(zeta)

    def psi_of(self, zeta: np.ndarray) -> np.ndarray:
        if not np.any(self.psi_a):
            return self.psi_base
        return self.psi_base + np.real(zeta @ self.psi_a)

    def initial_phi(self) -> np.ndarray:
        return modes_value(self.phi0_modes, self.grid)

    def derivatives(self, phi, zeta, coords) -> ScenarioDerivatives:
        """Analytic derivatives of X, chi, psi at every grid point."""
        shape = self.grid.shape
        if np.shape(phi) != shape:
            raise ArgumentError(f"derivatives are evaluated on the full grid {shape}")
        n, N = self.grid.n, self.table.N
        X_zeta = np.zeros(shape + (n, N, N), dtype=complex)
        if self.X.depends_on_gradient:
            X_zeta[...] = 0.5 * self.X.a[:, None, None] * self.X.theta
        return ScenarioDerivatives(
            X_phi=np.zeros(shape + (N, N)),
            X_zeta=X_zeta,
            X_z=np.zeros(shape + (n, N, N), dtype=complex),
            chi_phi=np.zeros(shape + (n, n)),
            chi_zeta=np.zeros(shape + (n, n, n), dtype=complex),
            chi_z=modes_dz_ddbar(self.chi_modes, self.grid),
            psi_phi=np.zeros(shape),
            psi_zeta=np.broadcast_to(0.5 * self.psi_a, shape + (n,)).astype(complex),
            psi_z=modes_dz(self.psi_modes, self.grid),
        )


@dataclass(frozen=True, eq=False)
class KernelResult:
    """Pointwise outputs over the grid; f, F and G are NaN where the margin is <= 0."""
    f: np.ndarray
    margin: np.ndarray
    G: np.ndarray
    F: Optional[np.ndarray] = None

    @property
    def admissible(self) -> bool:
        return bool(np.all(self.margin > 0))


def _kernel_chunk(Z: np.ndarray, table: MultiIndexTable, cone: ConeFunction,
                  with_F: bool) -> KernelResult:
    spectrum = eigen_pp(Z)
    margin = cone_margin(cone, spectrum.values)
    inside = margin > 0
    count, n, N = Z.shape[0], table.n, table.N
    values = np.full(count, np.nan)
    G = np.full((count, n, n), np.nan, dtype=complex)
    F = np.full((count, N, N), np.nan, dtype=complex) if with_F else None
    if np.any(inside):
        lam = spectrum.values[inside]
        values[inside] = eval_f(cone, lam)
        sub = SpectrumPP(values=lam, basis=spectrum.basis[inside], frame=spectrum.frame[inside])
        F_inside = f_matrix(sub, grad_f(cone, lam))
        G[inside] = g_matrix_contraction(F_inside, table)
        if with_F:
            F[inside] = F_inside
    return KernelResult(f=values, margin=margin, G=G, F=F)


def pointwise_kernel(scenario: Scenario, hess: np.ndarray, zeta: np.ndarray,
                     threads: Optional[int] = None, with_F: bool = False) -> KernelResult:
    """
    assemble Z -> eigenvalues -> f, grad f -> F -> G at every grid point.

    Points are split into contiguous chunks mapped over a thread pool and
    reassembled in order, so results do not depend on the thread count.
    """
    shape = scenario.grid.shape
    table = scenario.table
    h = symmetrize(scenario.chi + hess, "chi + ddbar phi")
    Z = scenario.X_of(zeta) + wedge_contribution(h, table)
    Z = Z.reshape((-1, table.N, table.N))

    workers = threads or config.THREADS
    if workers <= 1 or Z.shape[0] < config.PARALLEL_MIN_POINTS:
        parts = [_kernel_chunk(Z, table, scenario.cone, with_F)]
    else:
        chunks = np.array_split(Z, workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda chunk: _kernel_chunk(chunk, table, scenario.cone, with_F), chunks))

    n, N = table.n, table.N
    return KernelResult(
        f=np.concatenate([part.f for part in parts]).reshape(shape),
        margin=np.concatenate([part.margin for part in parts]).reshape(shape),
        G=np.concatenate([part.G for part in parts]).reshape(shape + (n, n)),
        F=np.concatenate([part.F for part in parts]).reshape(shape + (N, N)) if with_F else None,
    )


@dataclass(frozen=True, eq=False)
class FlowState:
    """An admissible field with its cached derivatives and kernel outputs."""
    phi: np.ndarray
    t: float
    hess: np.ndarray
    zeta: np.ndarray
    kernel: KernelResult
    dt_last: float = 0.0

    @classmethod
    def at(cls, phi, t: float, scenario: Scenario, threads: Optional[int] = None,
           list_violations: bool = False, with_F: bool = False) -> 'FlowState':
        """
        Evaluate the kernel for phi.

        Raises:
            AdmissibilityError: If the eigenvalues leave the cone anywhere
        """
        phi = scenario.grid.check_field(phi)
        hess, zeta = spectral_hessian(phi, scenario.grid)
        kernel = pointwise_kernel(scenario, hess, zeta, threads=threads, with_F=with_F)
        if not kernel.admissible:
            margin = kernel.margin
            worst = np.unravel_index(int(np.argmin(margin)), margin.shape)
            violating = []
            if list_violations:
                violating = [tuple(int(i) for i in index)
                             for index in np.argwhere(~(margin > 0))[:MAX_REPORTED_VIOLATIONS]]
            raise AdmissibilityError(
                f"eigenvalues leave the cone at t={t:.6g}, worst margin {float(np.min(margin)):.3e}",
                worst_point=tuple(int(i) for i in worst),
                margin=float(np.min(margin)),
                violating=violating,
            )
        return cls(phi=phi, t=float(t), hess=hess, zeta=zeta, kernel=kernel)

    @property
    def min_margin(self) -> float:
        return float(np.min(self.kernel.margin))

    @property
    def sup_grad(self) -> float:
        return float(np.sqrt(np.max(np.sum(np.abs(self.zeta) ** 2, axis=-1))))

    @property
    def lam_max_G(self) -> float:
        return float(np.max(np.linalg.eigvalsh(self.kernel.G)[..., -1]))


def rhs(state, scenario: Scenario, threads: Optional[int] = None) -> np.ndarray:
    """
    f(Lambda(Z[phi])) - psi[phi] at every grid point.

    Accepts a FlowState or a raw field; a raw field is evaluated first.

    Raises:
        AdmissibilityError: For a raw field leaving the cone
    """
    if not isinstance(state, FlowState):
        state = FlowState.at(state, 0.0, scenario, threads=threads)
    return state.kernel.f - scenario.psi_of(state.zeta)


def step(state: FlowState, scenario: Scenario, dt: float, threads: Optional[int] = None,
         max_halvings: int = MAX_HALVINGS) -> FlowState:
    """
    One Heun (explicit trapezoidal) step. A stage leaving the cone rejects the
    step and dt is halved, up to max_halvings times.

    Returns:
        The new state; dt_last holds the step actually taken

    Raises:
        FlowBreakdownError: If every attempt is rejected
    """
    if not dt > 0:
        raise ArgumentError(f"dt must be positive, got {dt}")
    k1 = rhs(state, scenario)
    margins: List[float] = []
    for attempt in range(max_halvings + 1):
        try:
            stage = FlowState.at(state.phi + dt * k1, state.t + dt, scenario, threads=threads)
            k2 = rhs(stage, scenario)
            new = FlowState.at(state.phi + 0.5 * dt * (k1 + k2), state.t + dt, scenario, threads=threads)
        except AdmissibilityError as error:
            margins.append(error.margin)
            logger.warning("step rejected at t=%.6g, dt=%.3e (margin %.3e), halving",
                           state.t, dt, error.margin)
            dt *= 0.5
            continue
        return replace(new, dt_last=dt)
    raise FlowBreakdownError(
        f"flow broke down at t={state.t:.6g} after {max_halvings} halvings",
        t=state.t, margin_history=margins)


@dataclass(frozen=True)
class FlowSettings:
    cfl_factor: float = 0.8
    t_max: float = 10.0
    t_min: float = 0.0
    tol_residual: float = 1e-5
    record_every: float = 0.0625
    dt_min: float = 1e-12
    dt_max: float = 1e-2
    threads: Optional[int] = None

    def __post_init__(self):
        if not self.cfl_factor > 0:
            raise ArgumentError("cfl_factor must be positive")
        if not self.record_every > 0:
            raise ArgumentError("record_every must be positive")
        if not 0 < self.dt_min <= self.dt_max:
            raise ArgumentError("need 0 < dt_min <= dt_max")
        if self.t_max < 0 or self.t_min < 0:
            raise ArgumentError("t_max and t_min must be non-negative")


def dt_control(state: FlowState, grid: TorusGrid, settings: FlowSettings) -> float:
    """
    dt = cfl / (sup lambda_max(G) * 4 pi^2 * n_eff * (K/2)^2), clamped to [dt_min, dt_max].

    n_eff counts the complex dimensions the grid resolves.
    """
    bound = state.lam_max_G * 4 * np.pi ** 2 * grid.n_eff * (grid.K / 2) ** 2
    if not bound > 0:
        return settings.dt_max
    return float(np.clip(settings.cfl_factor / bound, settings.dt_min, settings.dt_max))


def integrate_fixed(state: FlowState, scenario: Scenario, dt: float, steps: int,
                    threads: Optional[int] = None) -> List[FlowState]:
    """
    Fixed-step Heun trajectory, no dt adaptation.

    Returns:
        steps + 1 states starting with the input

    Raises:
        FlowBreakdownError: If any step leaves the cone
    """
    if steps < 1:
        raise ArgumentError("steps must be >= 1")
    states = [state]
    for _ in range(steps):
        states.append(step(states[-1], scenario, dt, threads=threads, max_halvings=0))
    return states


@dataclass(frozen=True)
class DiagnosticsRow:
    t: float
    residual_sup: float
    osc_phi_t: float
    mean_phi_t: float
    min_cone_margin: float
    sup_grad: float
    dt: float


@dataclass(frozen=True, eq=False)
class Snapshot:
    """Fields at one recorded time."""
    t: float
    phi: np.ndarray
    phi_t: np.ndarray


@dataclass
class Diagnostics:
    rows: List[DiagnosticsRow] = field(default_factory=list)
    snapshots: List[Snapshot] = field(default_factory=list)

    def record(self, state: FlowState, phi_t: np.ndarray) -> DiagnosticsRow:
        mean = float(np.mean(phi_t))
        row = DiagnosticsRow(
            t=state.t,
            residual_sup=float(np.max(np.abs(phi_t - mean))),
            osc_phi_t=float(np.max(phi_t) - np.min(phi_t)),
            mean_phi_t=mean,
            min_cone_margin=state.min_margin,
            sup_grad=state.sup_grad,
            dt=state.dt_last,
        )
        self.rows.append(row)
        self.snapshots.append(Snapshot(t=state.t, phi=state.phi.copy(), phi_t=phi_t.copy()))
        logger.debug("t=%.6g residual=%.3e osc=%.3e margin=%.3e", row.t, row.residual_sup,
                     row.osc_phi_t, row.min_cone_margin)
        return row

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(row, name) for row in self.rows])

    @property
    def times(self) -> np.ndarray:
        return self.column('t')


@dataclass(frozen=True, eq=False)
class FlowResult:
    """
    Attributes:
        phi_tilde: Normalized final field
        b: Constant of the limiting equation, midrange of the final phi_t
        converged: Residual reached tol_residual (after t_min)
        final_residual: sup |phi_t - b| at the final state
    """
    phi_tilde: np.ndarray
    b: float
    converged: bool
    final_residual: float
    t_end: float
    diagnostics: Diagnostics
    state: FlowState


def run(scenario: Scenario, settings: FlowSettings, phi0: Optional[np.ndarray] = None) -> FlowResult:
    """
    Evolve from phi0 (default: the scenario's initial modes), recording every
    record_every, until the residual of the limiting equation with b = mean phi_t
    is at most tol_residual (at t >= t_min) or t_max is reached.

    Raises:
        AdmissibilityError: If phi0 is not admissible (lists violating points)
        FlowBreakdownError: If the stepper cannot stay in the cone
    """
    threads = settings.threads
    phi0 = scenario.initial_phi() if phi0 is None else phi0
    state = FlowState.at(phi0, 0.0, scenario, threads=threads, list_violations=True)
    diagnostics = Diagnostics()
    logger.info("flow start: %s, grid %s, t_max=%g", scenario.cone.describe(),
                scenario.grid.shape, settings.t_max)

    index = 0
    converged = False
    while True:
        phi_t = rhs(state, scenario)
        row = diagnostics.record(state, phi_t)
        if row.residual_sup <= settings.tol_residual and state.t >= settings.t_min:
            converged = True
            break
        index += 1
        target = index * settings.record_every
        if target > settings.t_max * (1 + 1e-12):
            break
        while state.t < target:
            remaining = target - state.t
            dt = min(dt_control(state, scenario.grid, settings), remaining)
            state = step(state, scenario, dt, threads=threads)
            if state.dt_last == remaining:
                state = replace(state, t=target)

    phi_t = diagnostics.snapshots[-1].phi_t
    high, low = float(np.max(phi_t)), float(np.min(phi_t))
    b = 0.5 * (high + low)
    if converged:
        logger.info("converged at t=%.6g, residual %.3e", state.t, row.residual_sup)
    else:
        logger.warning("not converged by t_max=%g, residual %.3e", settings.t_max, row.residual_sup)
    return FlowResult(
        phi_tilde=normalize(state.phi),
        b=b,
        converged=converged,
        final_residual=0.5 * (high - low),
        t_end=state.t,
        diagnostics=diagnostics,
        state=state,
    )
