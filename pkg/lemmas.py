"""
Randomized property suites for the algebra behind the flow, run by
`check-lemmas`, and the finite-difference oracle for G.
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.linalg import eigh as generalized_eigh
from scipy.stats import unitary_group

from conefun import (ConeFunction, cone_margin, eval_f, grad_f, rank_condition, sample_cone,
                     structure_check, verify_tangent_cone_inequality)
from errors import ArgumentError, PPFlowError
from linop import f_matrix, g_matrix_contraction, g_matrix_direct, refined_floor, unitary_submatrix_sum
from multiindex import MultiIndexTable, enumerate_table
from ppalgebra import (SpectrumPP, compound, dagger, eigen_pp, exterior_oracle, metric_pp,
                       orthonormal_frame, wedge_contribution)

logger = logging.getLogger(__name__)

UNITARY_COUNT = 1000
MAX_UNITARY_BLOCKS = 2000
# chain-rule points per f: one per this many samples
CHAIN_RULE_FRACTION = 10
FD_STEP = 1e-5


@dataclass
class SuiteResult:
    """One property suite: how many cases ran and the worst normalized defect."""
    name: str
    passed: bool
    checked: int
    worst: float
    detail: str = ''


@dataclass
class LemmaReport:
    n: int
    p: int
    seed: Optional[int]
    suites: List[SuiteResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(suite.passed for suite in self.suites)

    def lines(self) -> List[str]:
        out = []
        for suite in self.suites:
            status = 'PASS' if suite.passed else 'FAIL'
            line = f"{status} {suite.name}: {suite.checked} cases, worst {suite.worst:.3e}"
            out.append(line + (f" ({suite.detail})" if suite.detail else ''))
        return out


def random_hermitian(rng: np.random.Generator, count: int, size: int, scale: float = 1.0) -> np.ndarray:
    A = rng.normal(size=(count, size, size)) + 1j * rng.normal(size=(count, size, size))
    return scale * 0.5 * (A + np.conj(np.swapaxes(A, -1, -2))) / np.sqrt(2)


def admissible_configurations(cone: ConeFunction, table: MultiIndexTable, count: int,
                              rng: np.random.Generator, x_scale: float = 0.3,
                              min_margin: float = 0.0, max_rounds: int = 200) -> Tuple[np.ndarray, np.ndarray]:
    """
    Random (X, h) pairs with Lambda(X + h ^ omega^{p-1}) inside the cone, at
    cone margin above min_margin.

    Returns:
        X of shape (count, N, N) and h of shape (count, n, n)
    """
    n, N = table.n, table.N
    kept_X, kept_h, total = [], [], 0
    for _ in range(max_rounds):
        batch = max(2 * (count - total), 64)
        h = random_hermitian(rng, batch, n) + rng.uniform(0.0, 3.0 + n, size=(batch, 1, 1)) * np.eye(n)
        X = random_hermitian(rng, batch, N, x_scale)
        keep = cone_margin(cone, eigen_pp(X + wedge_contribution(h, table)).values) > min_margin
        kept_X.append(X[keep])
        kept_h.append(h[keep])
        total += int(np.sum(keep))
        if total >= count:
            return np.concatenate(kept_X)[:count], np.concatenate(kept_h)[:count]
    raise ArgumentError(f"could not draw {count} admissible configurations for {cone.describe()}")


def g_from_configuration(cone: ConeFunction, table: MultiIndexTable, X, h) -> Tuple[np.ndarray, np.ndarray]:
    """(F, G) at Z = X + h ^ omega^{p-1}."""
    spectrum = eigen_pp(np.asarray(X) + wedge_contribution(h, table))
    F = f_matrix(spectrum, grad_f(cone, spectrum.values))
    return F, g_matrix_contraction(F, table)


def _fd_g_batch(cone: ConeFunction, table: MultiIndexTable, X: np.ndarray, h: np.ndarray,
                step: float) -> np.ndarray:
    # central differences over a (count, ...) stack, one eigen solve per direction and sign
    n = table.n

    def derivative(direction: np.ndarray) -> np.ndarray:
        plus = eval_f(cone, eigen_pp(X + wedge_contribution(h + step * direction, table)).values)
        minus = eval_f(cone, eigen_pp(X + wedge_contribution(h - step * direction, table)).values)
        return (np.asarray(plus) - np.asarray(minus)) / (2 * step)

    G = np.zeros(h.shape[:-2] + (n, n), dtype=complex)
    for i in range(n):
        E = np.zeros((n, n), dtype=complex)
        E[i, i] = 1.0
        G[..., i, i] = derivative(E)
        for j in range(i + 1, n):
            E = np.zeros((n, n), dtype=complex)
            E[i, j] = E[j, i] = 1.0
            real = derivative(E)
            E = np.zeros((n, n), dtype=complex)
            E[i, j], E[j, i] = 1j, -1j
            imag = derivative(E)
            G[..., i, j] = 0.5 * (real + 1j * imag)
            G[..., j, i] = np.conj(G[..., i, j])
    return G


def fd_g_oracle(cone: ConeFunction, table: MultiIndexTable, X, h, step: float = FD_STEP) -> np.ndarray:
    """
    G by central differences of h -> f(Lambda(X + h ^ omega^{p-1})).

    e_ii gives G_ii, e_ij + e_ji gives 2 Re G_ij and i(e_ij - e_ji) gives 2 Im G_ij.

    Raises:
        ArgumentError: If the step is not resolvable against h
    """
    h = np.asarray(h, dtype=complex)
    X = np.asarray(X, dtype=complex)
    if h.ndim != 2:
        raise ArgumentError("fd_g_oracle takes a single point")
    if not step > np.finfo(float).eps * max(1.0, float(np.max(np.abs(h)))):
        raise ArgumentError(f"finite-difference step {step} underflows against h")
    return _fd_g_batch(cone, table, X[None], h[None], step)[0]


def cone_functions(N: int) -> List[ConeFunction]:
    return [ConeFunction(family, k, N) for family in ('sigma_k_root', 'log_rho_k') for k in range(1, N + 1)]


def _norm(A: np.ndarray) -> np.ndarray:
    return np.linalg.norm(A, axis=(-2, -1))


def _hermitian(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + dagger(A))


def suite_parabolicity(table: MultiIndexTable, samples: int, rng: np.random.Generator) -> List[SuiteResult]:
    """G >= 0, the refined floor and the trace identity over admissible samples."""
    worst_psd = worst_floor = worst_trace = 0.0
    checked = 0
    failures = []
    for cone in cone_functions(table.N):
        X, h = admissible_configurations(cone, table, samples, rng)
        F, G = g_from_configuration(cone, table, X, h)
        lowest = np.linalg.eigvalsh(G)[..., 0]
        psd = -lowest / np.maximum(_norm(G), 1e-300)
        floor = (refined_floor(F, table.n, table.p) - lowest) / np.maximum(_norm(F), 1e-300)
        trace_G = np.real(np.trace(G, axis1=-2, axis2=-1))
        trace_F = np.real(np.trace(F, axis1=-2, axis2=-1))
        trace = np.abs(trace_G - table.p * trace_F) / np.maximum(np.abs(trace_G), 1e-300)
        worst_psd = max(worst_psd, float(np.max(psd)))
        worst_floor = max(worst_floor, float(np.max(floor)))
        worst_trace = max(worst_trace, float(np.max(trace)))
        checked += samples
        if np.max(psd) > 1e-10 or np.max(floor) > 1e-10 or np.max(trace) > 1e-13:
            failures.append(cone.describe())
    detail = 'failing: ' + ', '.join(failures) if failures else ''
    return [
        SuiteResult('parabolicity', worst_psd <= 1e-10, checked, worst_psd, detail),
        SuiteResult('refined floor', worst_floor <= 1e-10, checked, worst_floor),
        SuiteResult('trace identity', worst_trace <= 1e-13, checked, worst_trace),
    ]


def suite_dual_path(table: MultiIndexTable, samples: int, rng: np.random.Generator) -> SuiteResult:
    F = random_hermitian(rng, samples, table.N)
    fast = g_matrix_contraction(F, table)
    slow = g_matrix_direct(F, table)
    defect = _norm(fast - slow) / np.maximum(_norm(slow), 1e-300)
    worst = float(np.max(defect))
    return SuiteResult('dual path', worst <= 1e-12, samples, worst)


def suite_chain_rule(table: MultiIndexTable, samples: int, rng: np.random.Generator) -> SuiteResult:
    """Analytic G against central differences, generic and nearly repeated spectra, for every usable f."""
    count = max(1, samples // CHAIN_RULE_FRACTION)
    worst = 0.0
    checked = 0
    failures = []
    for cone in cone_functions(table.N):
        if not rank_condition(cone, table.n, table.p)[0]:
            continue
        # away from the boundary, where central differences stay accurate
        X, h = admissible_configurations(cone, table, count, rng, min_margin=0.5)
        near = 2.0 * np.eye(table.n) + random_hermitian(rng, count, table.n, 1e-3)
        X_near = np.zeros((count, table.N, table.N), dtype=complex)
        for X_all, h_all in ((X, h), (X_near, near)):
            _, G = g_from_configuration(cone, table, X_all, h_all)
            G_fd = _fd_g_batch(cone, table, X_all, h_all.astype(complex), FD_STEP)
            defect = float(np.max(_norm(G_fd - G) / np.maximum(_norm(G), 1e-300)))
            worst = max(worst, defect)
            checked += count
            if defect > 1e-5:
                failures.append(cone.describe())
    detail = 'failing: ' + ', '.join(sorted(set(failures))) if failures else ''
    return SuiteResult('chain rule', worst <= 1e-5, checked, worst, detail)


def suite_unitary_blocks(table: MultiIndexTable, rng: np.random.Generator) -> SuiteResult:
    """Blocks with |rows| + |cols| = N + 1 of Haar unitaries carry at least unit mass."""
    N = table.N
    unitaries = unitary_group.rvs(N, size=UNITARY_COUNT, random_state=rng)
    mass = np.abs(unitaries) ** 2
    pairs = [(rows, cols)
             for size in range(1, N + 1)
             for rows in itertools.combinations(range(N), size)
             for cols in itertools.combinations(range(N), N + 1 - size)]
    if len(pairs) > MAX_UNITARY_BLOCKS:
        chosen = rng.choice(len(pairs), size=MAX_UNITARY_BLOCKS, replace=False)
        pairs = [pairs[i] for i in sorted(chosen)]
    lowest = np.inf
    for rows, cols in pairs:
        block = mass[:, list(rows)][:, :, list(cols)]
        lowest = min(lowest, float(np.min(np.sum(block, axis=(-2, -1)))))
    # the public routine, with its unitarity check, on the first sample
    for rows, cols in pairs[:50]:
        value = unitary_submatrix_sum(unitaries[0], [r + 1 for r in rows], [c + 1 for c in cols])
        lowest = min(lowest, value)
    return SuiteResult('unitary blocks', lowest >= 1 - 1e-9, UNITARY_COUNT * len(pairs), 1 - lowest)


def suite_sum_structure(table: MultiIndexTable, samples: int, rng: np.random.Generator) -> SuiteResult:
    """Eigenvalues of h ^ omega^{p-1} are the p-fold sums of those of h."""
    h = random_hermitian(rng, samples, table.n)
    values = eigen_pp(wedge_contribution(h, table)).values
    base = np.linalg.eigvalsh(h)
    rows = np.asarray(table.indices) - 1
    expected = np.sort(np.sum(base[:, rows], axis=-1), axis=-1)
    worst = float(np.max(np.abs(values - expected) / np.maximum(np.max(np.abs(expected), axis=-1,
                                                                          keepdims=True), 1e-300)))
    detail = ''
    if table.n <= 3:
        oracle = max(float(np.max(np.abs(exterior_oracle(h[i], table) - wedge_contribution(h[i], table))))
                     for i in range(min(samples, 20)))
        worst = max(worst, oracle)
        detail = 'with exterior-algebra oracle'
    return SuiteResult('sum structure', worst <= 1e-12, samples, worst, detail)


def suite_frame_invariance(table: MultiIndexTable, samples: int, rng: np.random.Generator) -> SuiteResult:
    """Generalized eigenvalues for a metric g agree with those in its orthonormal frame."""
    count = max(1, min(samples, 200))
    n = table.n
    worst = 0.0
    congruence = 0.0
    rows = np.asarray(table.indices) - 1
    for _ in range(count):
        A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        g = A @ np.conj(A.T) + n * np.eye(n)
        h = random_hermitian(rng, 1, n)[0]
        X = random_hermitian(rng, 1, table.N)[0]
        frame = orthonormal_frame(g)

        in_frame = eigen_pp(wedge_contribution(frame.to_frame_11(h), table)).values
        generalized = generalized_eigh(h, g, eigvals_only=True)
        expected = np.sort(np.sum(generalized[rows], axis=-1))
        worst = max(worst, float(np.max(np.abs(in_frame - expected)) / max(1.0, np.max(np.abs(expected)))))

        reduced = eigen_pp(frame.to_frame_pp(X, table)).values
        direct = eigen_pp(X, metric_pp(g, table)).values
        worst = max(worst, float(np.max(np.abs(reduced - direct)) / max(1.0, np.max(np.abs(direct)))))

        # A* X A against A* omega A, A acting on (p,p)-forms through its compound
        U, V = (np.reshape(unitary_group.rvs(n, random_state=rng), (n, n)) for _ in range(2))
        A = (U * rng.uniform(0.5, 2.0, size=n)) @ V
        C = compound(A, table)
        moved = eigen_pp(_hermitian(dagger(C) @ X @ C), _hermitian(dagger(C) @ metric_pp(g, table) @ C)).values
        congruence = max(congruence, float(np.max(np.abs(moved - direct)) / max(1.0, np.max(np.abs(direct)))))
    passed = worst <= 1e-10 and congruence <= 1e-9
    return SuiteResult('frame invariance', passed, count, max(worst, congruence), f"congruence {congruence:.3e}")


def suite_basis_independence(table: MultiIndexTable, samples: int, rng: np.random.Generator) -> SuiteResult:
    """Two eigenbases of a degenerate spectrum give the same G."""
    N = table.N
    count = max(1, min(samples, 200))
    worst = 0.0
    for cone in (ConeFunction('sigma_k_root', 2, N), ConeFunction('log_rho_k', 2, N)):
        for _ in range(count):
            multiplicity = int(rng.integers(2, N + 1))
            values = np.sort(np.concatenate([np.full(multiplicity, 2.0 + rng.uniform()),
                                             3.0 + rng.uniform(size=N - multiplicity)]))
            P = unitary_group.rvs(N, random_state=rng)
            mix = np.eye(N, dtype=complex)
            degenerate = np.flatnonzero(np.isclose(values, values[0]))
            mix[np.ix_(degenerate, degenerate)] = unitary_group.rvs(len(degenerate), random_state=rng)
            grad = grad_f(cone, values)
            frame = np.eye(N, dtype=complex)
            G_one = g_matrix_contraction(f_matrix(SpectrumPP(values, P, frame), grad), table)
            G_two = g_matrix_contraction(f_matrix(SpectrumPP(values, P @ mix, frame), grad), table)
            worst = max(worst, float(np.linalg.norm(G_one - G_two)))
    return SuiteResult('basis independence', worst <= 1e-10, 2 * count, worst)


def suite_cone_functions(table: MultiIndexTable, samples: int, rng: np.random.Generator) -> List[SuiteResult]:
    """Structure checks for every f passing the rank test, and analytic gradients."""
    results = []
    seed = int(rng.integers(2 ** 31))
    for cone in cone_functions(table.N):
        if not rank_condition(cone, table.n, table.p)[0]:
            continue
        report = structure_check(cone, table.n, table.p, (1.0, 2.0), samples, rng_seed=seed)
        checks = ('monotone_ok', 'concave_ok', 'symmetric_ok', 's01_ok', 'rank_ok')
        failed = [name for name in checks if not getattr(report, name)]
        results.append(SuiteResult(f"structure {cone.describe()}", not failed, report.samples_used,
                                   float(len(failed)), ', '.join(failed)))

    worst = 0.0
    count = max(1, min(samples, 200))
    for cone in cone_functions(table.N):
        values = sample_cone(cone, count, rng)
        values = values[cone_margin(cone, values) > 0.1]
        if len(values) == 0:
            continue
        grad = grad_f(cone, values)
        scale = np.max(np.abs(grad), axis=-1)
        step = 1e-6
        for i in range(table.N):
            shift = np.zeros(table.N)
            shift[i] = step
            fd = (eval_f(cone, values + shift) - eval_f(cone, values - shift)) / (2 * step)
            worst = max(worst, float(np.max(np.abs(fd - grad[:, i]) / scale)))
    results.append(SuiteResult('gradient', worst <= 1e-5, count * 2 * table.N, worst))

    linear = ConeFunction('sigma_k_root', 1, table.N)
    tangent = verify_tangent_cone_inequality(linear, 1.0, np.full(table.N, 1.0), 10.0, 20, rng_seed=seed)
    results.append(SuiteResult('tangent cone', tangent.ok, 20, tangent.epsilon))
    return results


def check_lemmas(n: int, p: int, samples: int = 10000, seed: Optional[int] = None) -> LemmaReport:
    """
    Run every property suite for (n, p).

    Raises:
        ArgumentError: Unless 1 <= p <= n and samples >= 1
    """
    if samples < 1:
        raise ArgumentError("samples must be >= 1")
    table = enumerate_table(n, p)
    rng = np.random.default_rng(seed)
    report = LemmaReport(n=n, p=p, seed=seed)

    suites: List[Tuple[str, Callable[[], object]]] = [
        ('parabolicity', lambda: suite_parabolicity(table, samples, rng)),
        ('dual path', lambda: suite_dual_path(table, samples, rng)),
        ('chain rule', lambda: suite_chain_rule(table, samples, rng)),
        ('unitary blocks', lambda: suite_unitary_blocks(table, rng)),
        ('sum structure', lambda: suite_sum_structure(table, samples, rng)),
        ('frame invariance', lambda: suite_frame_invariance(table, samples, rng)),
        ('basis independence', lambda: suite_basis_independence(table, samples, rng)),
        ('cone functions', lambda: suite_cone_functions(table, samples, rng)),
    ]
    for name, suite in suites:
        try:
            outcome = suite()
        except PPFlowError as error:
            logger.error("suite raised %s: %s", type(error).__name__, error)
            report.suites.append(SuiteResult(name, False, 0, np.inf, str(error)))
            continue
        report.suites.extend(outcome if isinstance(outcome, list) else [outcome])
    for line in report.lines():
        logger.info(line)
    return report
