"""
Exception hierarchy shared by the solver, the lemma suites and the CLI.
"""
from typing import List, Optional, Sequence, Tuple


class PPFlowError(Exception):
    """Base class for every error raised by this package."""


class ArgumentError(PPFlowError, ValueError):
    """Shape, range or membership violation in a call argument."""


class DomainError(PPFlowError, ValueError):
    """Input outside the mathematical domain of an operation."""


class ConfigurationError(PPFlowError, ValueError):
    """Invalid scenario configuration or missing scenario callbacks."""


class AdmissibilityError(DomainError):
    """
    Eigenvalues left the cone at one or more grid points.

    Attributes:
        worst_point: Grid index of the point with the smallest margin
        margin: Cone margin at that point (<= 0)
        violating: Grid indices of all violating points (filled for
            initial-data pre-checks, may be truncated)
    """

    def __init__(self, message: str, worst_point: Tuple[int, ...], margin: float,
                 violating: Optional[Sequence[Tuple[int, ...]]] = None):
        super().__init__(message)
        self.worst_point = tuple(worst_point)
        self.margin = float(margin)
        self.violating: List[Tuple[int, ...]] = list(violating or [])


class FlowBreakdownError(PPFlowError, RuntimeError):
    """
    Step rejected after the maximum number of dt halvings.

    Attributes:
        t: Time at which the flow broke down
        margin_history: Cone margins seen by the rejected attempts
    """

    def __init__(self, message: str, t: float, margin_history: Sequence[float]):
        super().__init__(message)
        self.t = float(t)
        self.margin_history = [float(m) for m in margin_history]


class LevelSetSamplingError(PPFlowError, RuntimeError):
    """Could not produce enough samples on a level set of f."""
