"""
Run reports: the JSON record written by `run`, and the text and CSV renderings
produced by `report`.
"""
import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from jinja2 import Environment, FileSystemLoader, StrictUndefined

from errors import ArgumentError

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).resolve().parent / 'templates'
VERDICTS = ('converged', 'not_converged', 'structure_failed')


@dataclass
class RunReport:
    """
    Outcome of one flow run.

    The verdict is "converged" only when final_residual <= tol_residual.
    """
    verdict: str
    b: float
    final_residual: float
    tol_residual: float
    t_end: float
    rows: int
    structure: Dict[str, Any]
    config: Dict[str, Any]
    beta: Optional[float] = None
    oscillation_C: Optional[float] = None
    deltas: List[Optional[float]] = field(default_factory=list)
    oscillation_note: str = ''
    max_principle_ok: Optional[bool] = None
    max_principle_violations: int = 0
    gradient_ok: Optional[bool] = None
    cauchy_ok: Optional[bool] = None
    harnack: Optional[Dict[str, float]] = None
    trace: Dict[str, List[float]] = field(default_factory=dict)
    artifacts: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ArgumentError(f"unknown verdict {self.verdict!r}")
        if self.verdict == 'converged' and not self.final_residual <= self.tol_residual:
            raise ArgumentError("a converged report needs final_residual <= tol_residual")

    @property
    def converged(self) -> bool:
        return self.verdict == 'converged'

    @property
    def monitors_ok(self) -> bool:
        return all(flag is not False for flag in (self.max_principle_ok, self.gradient_ok, self.cauchy_ok))

    @property
    def exit_code(self) -> int:
        return 0 if self.converged and self.monitors_ok else 1

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> 'RunReport':
        try:
            data = json.loads(text)
        except json.JSONDecodeError as error:
            raise ArgumentError(f"report is not valid JSON: {error}")
        try:
            return cls(**data)
        except TypeError as error:
            raise ArgumentError(f"report has unexpected fields: {error}")

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(self.to_json(), encoding='utf-8')
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'RunReport':
        return cls.from_json(Path(path).read_text(encoding='utf-8'))


def _fmt(value, spec: str = '.6g') -> str:
    if value is None:
        return '-'
    if isinstance(value, bool):
        return 'yes' if value else 'no'
    return format(value, spec)


def render_report(report: RunReport) -> str:
    """Human-readable summary from templates/report.txt."""
    env = Environment(loader=FileSystemLoader(str(TEMPLATE_DIR)), undefined=StrictUndefined,
                      keep_trailing_newline=True)
    env.filters['fmt'] = _fmt
    template = env.get_template('report.txt')
    return template.render(report=report, deltas=list(enumerate(report.deltas)))


def write_oscillation_csv(report: RunReport, path: Union[str, Path]) -> Path:
    """t, osc_phi_t and the fitted envelope C e^{-beta t} (empty when no fit exists)."""
    times = report.trace.get('t', [])
    osc = report.trace.get('osc_phi_t', [])
    fitted = report.beta is not None and report.oscillation_C is not None and np.isfinite(report.beta)
    path = Path(path)
    with path.open('w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(('t', 'osc_phi_t', 'envelope'))
        for t, value in zip(times, osc):
            envelope = repr(float(report.oscillation_C * np.exp(-report.beta * t))) if fitted else ''
            writer.writerow((repr(float(t)), repr(float(value)), envelope))
    logger.info("wrote oscillation table to %s", path)
    return path
