"""
Scenario configuration: TOML parsing and emission, validation, construction of
the flow problem and the end-to-end run that writes all artifacts.
"""
import json
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from scipy.special import comb

from conefun import ConeFunction, eval_f, in_cone, rank_condition, structure_check
from errors import ArgumentError, ConfigurationError
from fielddump import write_diagnostics_csv, write_field
from monitors import (cauchy_consistency, data_gradient_scale, gradient_bound_check, harnack_fields,
                      harnack_quantity, max_principle_monitor, oscillation_analysis)
from multiindex import enumerate_table
from ppalgebra import eigen_pp, wedge_contribution
from report import RunReport
from torusflow import FlowSettings, FourierMode, Scenario, XForm, run
from torusgrid import TorusGrid

logger = logging.getLogger(__name__)

STRUCTURE_SAMPLES = 2000
# oscillation ratios need this many recorded periods
MIN_PERIODS = 4


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid')


class ModeSpec(_Section):
    amplitude: float
    wave: List[int]
    kind: Literal['cos', 'sin'] = 'cos'


class EntrySpec(_Section):
    row: int = Field(ge=1)
    col: int = Field(ge=1)
    re: float
    im: float = 0.0


class ProblemSection(_Section):
    n: int = Field(ge=3)
    p: int = Field(ge=2)
    family: Literal['sigma_k_root', 'log_rho_k']
    k: int = Field(ge=1)


class GridSection(_Section):
    K: int = 16
    collapse_inactive: bool = True


class ChiSection(_Section):
    c: float = 1.0
    modes: List[ModeSpec] = []


class XSection(_Section):
    type: Literal['zero', 'constant_form', 'gradient_linear', 'aeppli'] = 'zero'
    diagonal: List[float] = []
    entries: List[EntrySpec] = []
    a_re: List[float] = []
    a_im: List[float] = []
    theta: List[float] = []
    gamma: float = 0.0


class PsiSection(_Section):
    constant: Optional[float] = None
    modes: List[ModeSpec] = []
    a_re: List[float] = []
    a_im: List[float] = []


class Phi0Section(_Section):
    modes: List[ModeSpec] = []


class FlowSection(_Section):
    cfl_factor: float = Field(default=0.8, gt=0)
    t_max: float = Field(default=10.0, ge=0)
    t_min: float = Field(default=0.0, ge=0)
    tol_residual: float = Field(default=1e-5, gt=0)
    record_every: float = Field(default=0.0625, gt=0)
    dt_min: float = Field(default=1e-12, gt=0)
    dt_max: float = Field(default=1e-2, gt=0)
    oscillation_period: float = Field(default=1.0, gt=0)
    harnack_alpha: Optional[float] = Field(default=None, gt=1)
    seed: int = 0


class ScenarioConfig(_Section):
    problem: ProblemSection
    grid: GridSection = GridSection()
    chi: ChiSection = ChiSection()
    X: XSection = XSection()
    psi: PsiSection = PsiSection()
    phi0: Phi0Section = Phi0Section()
    flow: FlowSection = FlowSection()

    @property
    def N(self) -> int:
        return int(comb(self.problem.n, self.problem.p, exact=True))


def _fail(path: str, message: str) -> ConfigurationError:
    return ConfigurationError(f"{path}: {message}")


def _check_semantics(config: ScenarioConfig) -> None:
    n, p, k = config.problem.n, config.problem.p, config.problem.k
    if not 2 <= p <= n - 1:
        raise _fail('problem.p', f"must satisfy 2 <= p <= n-1, got p={p} with n={n}")
    N = config.N
    if k > N:
        raise _fail('problem.k', f"must not exceed N={N}")
    cone = ConeFunction(config.problem.family, k, N)
    ok, rank, threshold = rank_condition(cone, n, p)
    if not ok:
        raise _fail('problem.k', f"rank condition fails for {cone.describe()}: "
                                 f"rank {rank} < N(n-p)/n + 1 = {threshold:.4g}")
    K = config.grid.K
    if K < 8 or K & (K - 1):
        raise _fail('grid.K', f"must be a power of two >= 8, got {K}")

    for section, modes in (('chi', config.chi.modes), ('psi', config.psi.modes), ('phi0', config.phi0.modes)):
        for i, mode in enumerate(modes):
            if len(mode.wave) != 2 * n:
                raise _fail(f"{section}.modes.{i}.wave", f"needs {2 * n} entries (x1, y1, ..., xn, yn)")
            if any(2 * abs(m) >= K for m in mode.wave):
                raise _fail(f"{section}.modes.{i}.wave", f"frequency not resolved at K={K}")

    X = config.X
    for name in ('diagonal', 'theta'):
        values = getattr(X, name)
        if values and len(values) != N:
            raise _fail(f"X.{name}", f"needs {N} entries, got {len(values)}")
    for i, entry in enumerate(X.entries):
        if entry.row > N or entry.col > N:
            raise _fail(f"X.entries.{i}", f"row and col must lie in [1, {N}]")
        if entry.row == entry.col and entry.im != 0:
            raise _fail(f"X.entries.{i}", "diagonal entries must be real")
    for section, a_re, a_im in (('X', X.a_re, X.a_im), ('psi', config.psi.a_re, config.psi.a_im)):
        for name, values in (('a_re', a_re), ('a_im', a_im)):
            if values and len(values) != n:
                raise _fail(f"{section}.{name}", f"needs {n} entries, got {len(values)}")
    if X.type == 'zero' and (X.diagonal or X.entries or X.theta):
        raise _fail('X.type', "'zero' takes no form data")

    flow = config.flow
    if flow.dt_min > flow.dt_max:
        raise _fail('flow.dt_min', "must not exceed flow.dt_max")


def parse_config(text: str) -> ScenarioConfig:
    """
    Parse and validate a TOML scenario.

    Raises:
        ConfigurationError: Message starts with the dotted path of the offending field
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as error:
        raise ConfigurationError(f"syntax: {error}")
    try:
        config = ScenarioConfig.model_validate(data)
    except ValidationError as error:
        first = error.errors()[0]
        path = '.'.join(str(part) for part in first['loc']) or 'config'
        raise ConfigurationError(f"{path}: {first['msg']}")
    _check_semantics(config)
    return config


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    try:
        text = Path(path).read_text(encoding='utf-8')
    except OSError as error:
        raise ConfigurationError(f"config: cannot read {path}: {error}")
    return parse_config(text)


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, list):
        return '[' + ', '.join(_toml_value(item) for item in value) + ']'
    if isinstance(value, dict):
        return '{' + ', '.join(f"{key} = {_toml_value(item)}" for key, item in value.items()
                               if item is not None) + '}'
    raise ArgumentError(f"cannot write {type(value).__name__} to TOML")


def emit_config(config: ScenarioConfig) -> str:
    """TOML text with every field written out; parse_config reads it back to an equal config."""
    lines: List[str] = []
    for section, values in config.model_dump().items():
        lines.append(f"[{section}]")
        for key, value in values.items():
            if value is not None:
                lines.append(f"{key} = {_toml_value(value)}")
        lines.append('')
    return '\n'.join(lines)


def _modes(specs: List[ModeSpec]) -> Tuple[FourierMode, ...]:
    return tuple(FourierMode(amplitude=spec.amplitude, wave=tuple(spec.wave), kind=spec.kind) for spec in specs)


def _complex_vector(re: List[float], im: List[float], n: int) -> np.ndarray:
    out = np.zeros(n, dtype=complex)
    if re:
        out += np.asarray(re, dtype=float)
    if im:
        out += 1j * np.asarray(im, dtype=float)
    return out


def _x_form(config: ScenarioConfig, table) -> XForm:
    X = config.X
    if X.type == 'zero':
        return XForm.zero(table)
    N = table.N
    omega0 = np.diag(np.asarray(X.diagonal or [0.0] * N, dtype=complex))
    for entry in X.entries:
        r, c = entry.row - 1, entry.col - 1
        omega0[r, c] = complex(entry.re, entry.im)
        omega0[c, r] = complex(entry.re, -entry.im)
    theta = np.diag(np.asarray(X.theta or [0.0] * N, dtype=complex))
    return XForm(kind=X.type, omega0=omega0, theta=theta,
                 a=_complex_vector(X.a_re, X.a_im, table.n), gamma=X.gamma)


def _active_axes(config: ScenarioConfig) -> Optional[List[bool]]:
    if not config.grid.collapse_inactive:
        return None
    active = [False] * (2 * config.problem.n)
    for modes in (config.chi.modes, config.psi.modes, config.phi0.modes):
        for mode in modes:
            for axis, m in enumerate(mode.wave):
                active[axis] = active[axis] or m != 0
    return active


@dataclass(frozen=True, eq=False)
class PreparedRun:
    config: ScenarioConfig
    scenario: Scenario
    settings: FlowSettings


def stationary_psi(cone: ConeFunction, X: XForm, c: float, table) -> float:
    """f(Lambda(Omega_0 + c omega ^ omega^{p-1})), the psi keeping phi = 0 fixed when chi = c omega."""
    Z = X.omega0 + wedge_contribution(c * np.eye(table.n), table)
    values = eigen_pp(Z).values
    if not in_cone(cone, values):
        raise _fail('chi.c', f"Omega_0 + c omega ^ omega^(p-1) is not admissible for {cone.describe()}")
    return float(eval_f(cone, values))


def build_scenario(config: ScenarioConfig, threads: Optional[int] = None) -> PreparedRun:
    """Turn a validated config into a Scenario and FlowSettings."""
    n, p = config.problem.n, config.problem.p
    table = enumerate_table(n, p)
    cone = ConeFunction(config.problem.family, config.problem.k, table.N)
    grid = TorusGrid.build(n, config.grid.K, _active_axes(config))
    X = _x_form(config, table)
    psi_constant = config.psi.constant
    if psi_constant is None:
        psi_constant = stationary_psi(cone, X, config.chi.c, table)
    try:
        scenario = Scenario(
            grid=grid, table=table, cone=cone, X=X,
            chi_c=config.chi.c,
            chi_modes=_modes(config.chi.modes),
            psi_constant=psi_constant,
            psi_modes=_modes(config.psi.modes),
            psi_a=_complex_vector(config.psi.a_re, config.psi.a_im, n),
            phi0_modes=_modes(config.phi0.modes),
        )
    except ArgumentError as error:
        raise ConfigurationError(f"scenario: {error}")
    flow = config.flow
    t_min = min(max(flow.t_min, MIN_PERIODS * flow.oscillation_period), flow.t_max)
    settings = FlowSettings(
        cfl_factor=flow.cfl_factor, t_max=flow.t_max, t_min=t_min,
        tol_residual=flow.tol_residual, record_every=flow.record_every,
        dt_min=flow.dt_min, dt_max=flow.dt_max, threads=threads,
    )
    return PreparedRun(config=config, scenario=scenario, settings=settings)


def _nan_to_none(values) -> List[Optional[float]]:
    return [float(v) if np.isfinite(v) else None for v in values]


def execute_run(config: ScenarioConfig, out_dir: Union[str, Path], threads: Optional[int] = None,
                seed: Optional[int] = None) -> RunReport:
    """
    Structure check, flow run, monitors and artifacts.

    Writes diagnostics.csv, phi0.bin, phi_final.bin, phi_t_final.bin and
    report.json into out_dir.

    Raises:
        ConfigurationError: Invalid scenario data
        AdmissibilityError: Initial data outside the cone
        FlowBreakdownError: The stepper could not stay in the cone
    """
    prepared = build_scenario(config, threads=threads)
    scenario, settings = prepared.scenario, prepared.settings
    n, p, K = config.problem.n, config.problem.p, config.grid.K
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = config.flow.seed if seed is None else seed

    psi0 = scenario.psi_of(np.zeros(scenario.grid.shape + (n,)))
    structure = structure_check(scenario.cone, n, p, (float(np.min(psi0)), float(np.max(psi0))),
                                STRUCTURE_SAMPLES, rng_seed=seed)
    config_data = config.model_dump()
    if not structure.passed:
        logger.warning("structure check failed for %s", scenario.cone.describe())
        report = RunReport(verdict='structure_failed', b=float('nan'), final_residual=float('nan'),
                           tol_residual=settings.tol_residual, t_end=0.0, rows=0,
                           structure=structure.to_dict(), config=config_data)
        report.artifacts['report'] = str(out / 'report.json')
        report.write(out / 'report.json')
        return report

    phi0 = scenario.initial_phi()
    result = run(scenario, settings, phi0=phi0)
    diagnostics = result.diagnostics
    artifacts = {
        'diagnostics': str(write_diagnostics_csv(out / 'diagnostics.csv', diagnostics)),
        'phi0': str(write_field(out / 'phi0.bin', phi0, n, p, K, 0.0)),
        'phi_final': str(write_field(out / 'phi_final.bin', result.phi_tilde, n, p, K, result.t_end)),
        'phi_t_final': str(write_field(out / 'phi_t_final.bin', diagnostics.snapshots[-1].phi_t,
                                       n, p, K, result.t_end)),
    }

    beta = C = None
    deltas: List[Optional[float]] = []
    note = ''
    cauchy_ok = None
    try:
        oscillation = oscillation_analysis(diagnostics, period=config.flow.oscillation_period)
    except ArgumentError as error:
        note = str(error)
    else:
        deltas = _nan_to_none(oscillation.ratios)
        if oscillation.degenerate:
            note = 'oscillation vanishes from the start'
        elif np.isfinite(oscillation.beta):
            beta, C = oscillation.beta, oscillation.C
            cauchy_ok, _ = cauchy_consistency(diagnostics, beta, C)
        if oscillation.truncated:
            note = note or 'fit truncated at the oscillation floor'

    principle = max_principle_monitor(diagnostics)
    gradient_ok, _, _ = gradient_bound_check(diagnostics, floor=data_gradient_scale(scenario))

    harnack = None
    if config.flow.harnack_alpha is not None and len(diagnostics.snapshots) >= 3:
        curve = harnack_quantity(diagnostics.times, harnack_fields(diagnostics), scenario.grid,
                                 config.flow.harnack_alpha)
        harnack = {'C1': curve.C1, 'C2': curve.C2, 'alpha': config.flow.harnack_alpha}

    report = RunReport(
        verdict='converged' if result.converged else 'not_converged',
        b=result.b,
        final_residual=result.final_residual,
        tol_residual=settings.tol_residual,
        t_end=result.t_end,
        rows=len(diagnostics.rows),
        structure=structure.to_dict(),
        config=config_data,
        beta=beta,
        oscillation_C=C,
        deltas=deltas,
        oscillation_note=note,
        max_principle_ok=principle.ok,
        max_principle_violations=len(principle.violations),
        gradient_ok=gradient_ok,
        cauchy_ok=cauchy_ok,
        harnack=harnack,
        trace={'t': diagnostics.times.tolist(), 'osc_phi_t': diagnostics.column('osc_phi_t').tolist()},
        artifacts=artifacts,
    )
    report.artifacts['report'] = str(out / 'report.json')
    report.write(out / 'report.json')
    logger.info("run finished: %s, artifacts in %s", report.verdict, out)
    return report
