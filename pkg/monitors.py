"""
Checks run against a recorded flow: maximum principle bounds, oscillation decay,
the linearized equation for phi_t, the Harnack quantity and the consistency
properties of the trace.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from errors import ArgumentError, DomainError
from linop import PointData, contract, lin_coefficients
from ppalgebra import wedge_contribution
from torusflow import Diagnostics, FlowState, Scenario, modes_dz, rhs
from torusgrid import TorusGrid, normalize, spectral_hessian

logger = logging.getLogger(__name__)

OSCILLATION_FLOOR = 1e-13


@dataclass
class MaxPrincipleReport:
    """
    Bounds H0 <= phi_t <= H1 (times e^{K0 t}) and the companion bounds on phi.

    violations holds (t, quantity, excess) for every recorded time breaking a bound.
    """
    H0: float
    H1: float
    K0: float
    violations: List[Tuple[float, str, float]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def max_principle_monitor(diagnostics: Diagnostics, K0: float = 0.0, rtol: float = 1e-8,
                          phi_rtol: float = 1e-6, atol: float = 1e-12) -> MaxPrincipleReport:
    """
    Check H0 e^{K0 t} <= phi_t <= H1 e^{K0 t} and
    min phi_0 + H0 I(t) <= phi <= max phi_0 + H1 I(t), I(t) = (e^{K0 t} - 1)/K0 (t for K0 = 0),
    at every recorded time.

    For K0 = 0, H0 and H1 are the extrema of phi_t at t = 0; for K0 > 0 they are
    widened to H0 <= 0 <= H1.
    """
    if K0 < 0:
        raise ArgumentError("K0 must be non-negative")
    if not diagnostics.snapshots:
        raise ArgumentError("empty trace")
    first = diagnostics.snapshots[0]
    H0, H1 = float(np.min(first.phi_t)), float(np.max(first.phi_t))
    if K0 > 0:
        H0, H1 = min(H0, 0.0), max(H1, 0.0)
    phi_low, phi_high = float(np.min(first.phi)), float(np.max(first.phi))
    spread = H1 - H0
    report = MaxPrincipleReport(H0=H0, H1=H1, K0=K0)

    for snap in diagnostics.snapshots:
        growth = np.exp(K0 * snap.t)
        integral = snap.t if K0 == 0 else np.expm1(K0 * snap.t) / K0
        tol = rtol * spread * growth + atol
        phi_tol = phi_rtol * spread * integral + atol
        checks = (
            ('phi_t lower', H0 * growth - float(np.min(snap.phi_t)), tol),
            ('phi_t upper', float(np.max(snap.phi_t)) - H1 * growth, tol),
            ('phi lower', phi_low + H0 * integral - float(np.min(snap.phi)), phi_tol),
            ('phi upper', float(np.max(snap.phi)) - phi_high - H1 * integral, phi_tol),
        )
        for name, excess, allowed in checks:
            if excess > allowed:
                report.violations.append((snap.t, name, float(excess)))
    if report.violations:
        logger.warning("maximum principle violated at %d recorded times", len(report.violations))
    return report


@dataclass
class OscillationReport:
    """
    Attributes:
        times: k T for k = 0..m
        omegas: Oscillation of phi_t at those times
        ratios: omega((k+1)T) / omega(kT), NaN once omega is below the floor
        beta: Least-squares exponential rate from all recorded rows above the floor
        C: sup_t omega(t) e^{beta t} over the fitted rows
        degenerate: omega vanishes from the start (stationary flow)
        truncated: Rows below the floor were cut from the fit
    """
    times: np.ndarray
    omegas: np.ndarray
    ratios: np.ndarray
    beta: float
    C: float
    degenerate: bool
    truncated: bool

    @property
    def contracting(self) -> bool:
        finite = self.ratios[np.isfinite(self.ratios)]
        return bool(np.all(finite < 1))


def oscillation_analysis(diagnostics: Diagnostics, period: float = 1.0,
                         floor: float = OSCILLATION_FLOOR) -> OscillationReport:
    """
    Contraction ratios of the oscillation of phi_t over periods T and an exponential fit.

    Raises:
        ArgumentError: If the trace does not reach t = 4T at record times k T
    """
    if not period > 0:
        raise ArgumentError("period must be positive")
    t = diagnostics.times
    osc = diagnostics.column('osc_phi_t')
    picked = []
    k = 0
    while True:
        hits = np.flatnonzero(np.abs(t - k * period) <= 1e-9 * max(1.0, k * period))
        if hits.size == 0:
            break
        picked.append(int(hits[0]))
        k += 1
    if len(picked) < 5:
        raise ArgumentError(f"trace covers {len(picked) - 1} periods of T={period}, need at least 4")

    times = t[picked]
    omegas = osc[picked]
    with np.errstate(divide='ignore', invalid='ignore'):
        ratios = np.where(omegas[:-1] > floor, omegas[1:] / omegas[:-1], np.nan)

    above = osc > floor
    cut = len(osc) if np.all(above) else int(np.argmin(above))
    truncated = cut < len(osc)
    if truncated:
        logger.warning("oscillation below %.1e from t=%.6g, fit truncated", floor, t[cut])
    if cut < 2:
        return OscillationReport(times=times, omegas=omegas, ratios=ratios, beta=float('nan'),
                                 C=float('nan'), degenerate=bool(cut == 0), truncated=truncated)
    slope, _ = np.polyfit(t[:cut], np.log(osc[:cut]), 1)
    beta = float(-slope)
    C = float(np.max(osc[:cut] * np.exp(beta * t[:cut])))
    return OscillationReport(times=times, omegas=omegas, ratios=ratios, beta=beta, C=C,
                             degenerate=False, truncated=truncated)


@dataclass(frozen=True, eq=False)
class LinearizedResidual:
    residual: float
    t: float
    dt: float
    Lu: np.ndarray = field(repr=False)


def verify_linearized_evolution(states: Sequence[FlowState], scenario: Scenario) -> LinearizedResidual:
    """
    Apply L u = u_t - tr(G ddbar u) - 2 Re(B_alpha d_alpha u) to u = phi_t, with
    coefficients frozen at the middle of three equally spaced states and u_t by
    centered difference, and report sup |L u - B_phi u|.

    Raises:
        ArgumentError: Fewer than three states or unequal spacing
    """
    if len(states) < 3:
        raise ArgumentError("need three consecutive states")
    before, middle, after = states[0], states[1], states[2]
    dt = middle.t - before.t
    if not dt > 0 or abs((after.t - middle.t) - dt) > 1e-12 * max(1.0, after.t):
        raise ArgumentError("states must be equally spaced in time")

    u_before, u_after = rhs(before, scenario), rhs(after, scenario)
    frozen = FlowState.at(middle.phi, middle.t, scenario, with_F=True)
    u = rhs(frozen, scenario)
    hess_u, zeta_u = spectral_hessian(u, scenario.grid)
    coefficients = lin_coefficients(scenario, PointData(
        phi=frozen.phi, zeta=frozen.zeta, coords=scenario.grid.coords,
        F=frozen.kernel.F, G=frozen.kernel.G))

    u_t = (u_after - u_before) / (2 * dt)
    diffusion = np.real(contract(frozen.kernel.G, hess_u))
    drift = 2 * np.real(np.sum(coefficients.B_alpha * zeta_u, axis=-1))
    Lu = u_t - diffusion - drift
    residual = float(np.max(np.abs(Lu - coefficients.B_phi * u)))
    return LinearizedResidual(residual=residual, t=middle.t, dt=dt, Lu=Lu)


@dataclass
class HarnackReport:
    times: np.ndarray
    Q: np.ndarray
    C1: float
    C2: float

    @property
    def bounded(self) -> bool:
        return bool(np.isfinite(self.C1) and np.isfinite(self.C2))


def harnack_quantity(times: Sequence[float], fields: Sequence[np.ndarray], grid: TorusGrid,
                     alpha: float) -> HarnackReport:
    """
    Q(t) = sup (|d log u|^2 - alpha d_t log u) for a positive solution u, and
    constants with Q(t) <= C1 + C2 / t on t > 0.

    C1 is the largest Q over the second half of the trace, C2 the largest
    t (Q - C1) over t > 0.

    Raises:
        ArgumentError: alpha <= 1 or fewer than three times
        DomainError: If u <= 0 anywhere
    """
    if not alpha > 1:
        raise ArgumentError("alpha must exceed 1")
    times = np.asarray(times, dtype=float)
    if len(times) < 3 or len(fields) != len(times):
        raise ArgumentError("need at least three times with one field each")
    u = np.stack([grid.check_field(values) for values in fields])
    if np.any(u <= 0):
        raise DomainError("Harnack quantity needs u > 0 everywhere")

    log_u = np.log(u)
    # relative to the first time so a constant u has an exact zero derivative
    dt_log_u = np.gradient(log_u - log_u[0], times, axis=0)
    Q = np.empty(len(times))
    for i, values in enumerate(log_u):
        _, zeta = spectral_hessian(values, grid)
        Q[i] = np.max(np.sum(np.abs(zeta) ** 2, axis=-1) - alpha * dt_log_u[i])

    late = times >= 0.5 * times[-1]
    C1 = max(0.0, float(np.max(Q[late])))
    positive = times > 0
    C2 = max(0.0, float(np.max(times[positive] * (Q[positive] - C1)))) if np.any(positive) else 0.0
    return HarnackReport(times=times, Q=Q, C1=C1, C2=C2)


def harnack_fields(diagnostics: Diagnostics, eps: float = 1e-3) -> List[np.ndarray]:
    """u = phi_t - inf phi_t + eps, one shift for the whole trace."""
    low = min(float(np.min(snap.phi_t)) for snap in diagnostics.snapshots)
    return [snap.phi_t - low + eps for snap in diagnostics.snapshots]


def cauchy_consistency(diagnostics: Diagnostics, beta: float, C: float,
                       slack: float = 1.05, atol: float = 1e-12) -> Tuple[bool, float]:
    """
    Check sup |phi~(t2) - phi~(t1)| <= (C / beta) e^{-beta t1} over recorded t1 < t2.

    Returns:
        (ok, largest ratio of observed change to the bound)
    """
    phis = [normalize(snap.phi) for snap in diagnostics.snapshots]
    t = diagnostics.times
    worst = 0.0
    ok = True
    for i in range(len(phis) - 1):
        change = max(float(np.max(np.abs(phis[j] - phis[i]))) for j in range(i + 1, len(phis)))
        if beta > 0 and np.isfinite(beta) and np.isfinite(C):
            bound = C / beta * np.exp(-beta * t[i])
        else:
            bound = 0.0
        if change > slack * bound + atol:
            ok = False
        if bound > 0:
            worst = max(worst, change / bound)
    return ok, worst


def data_gradient_scale(scenario: Scenario) -> float:
    """sup |d psi| + sup |d rho| for the chi potential rho: the gradient size the data drives."""
    total = 0.0
    for modes in (scenario.psi_modes, scenario.chi_modes):
        if modes:
            dz = modes_dz(modes, scenario.grid)
            total += float(np.sqrt(np.max(np.sum(np.abs(dz) ** 2, axis=-1))))
    return total


def gradient_bound_check(diagnostics: Diagnostics, factor: float = 10.0, fraction: float = 0.1,
                         floor: float = 0.0) -> Tuple[bool, float, float]:
    """
    sup |d phi| over the trace against factor times a reference: the larger of
    its sup over the first fraction of the elapsed time and floor.

    A flow started from phi_0 = 0 has no gradient at t = 0, so runs pass the
    data scale (data_gradient_scale) as floor.

    Returns:
        (ok, reference, overall sup)
    """
    grad = diagnostics.column('sup_grad')
    if grad.size == 0:
        raise ArgumentError("empty trace")
    t = diagnostics.times
    early = t <= t[0] + fraction * (t[-1] - t[0])
    reference = max(float(np.max(grad[early])), float(floor))
    overall = float(np.max(grad))
    return overall <= factor * reference + 1e-14, reference, overall


def mean_identity_defect(states: Sequence[FlowState], scenario: Scenario) -> float:
    """
    max over consecutive states of |d/dt mean(phi) - mean(f - psi)|, the
    difference quotient compared with the trapezoidal mean of the right-hand side.
    """
    if len(states) < 2:
        raise ArgumentError("need at least two states")
    worst = 0.0
    previous = float(np.mean(rhs(states[0], scenario)))
    for before, after in zip(states, states[1:]):
        dt = after.t - before.t
        if not dt > 0:
            raise ArgumentError("states must increase in time")
        current = float(np.mean(rhs(after, scenario)))
        quotient = (float(np.mean(after.phi)) - float(np.mean(before.phi))) / dt
        worst = max(worst, abs(quotient - 0.5 * (previous + current)))
        previous = current
    return worst


def exactness_defect(state: FlowState, scenario: Scenario) -> float:
    """
    Largest entry of the torus mean of Z[phi] - Z[0]; the difference is an
    exact form, so its integral vanishes.
    """
    table = scenario.table
    Z_phi = scenario.X_of(state.zeta) + wedge_contribution(scenario.chi + state.hess, table)
    Z_0 = scenario.X_of(np.zeros_like(state.zeta)) + wedge_contribution(
        np.broadcast_to(scenario.chi, state.hess.shape), table)
    axes = tuple(range(Z_phi.ndim - 2))
    return float(np.max(np.abs(np.mean(Z_phi - Z_0, axis=axes))))
