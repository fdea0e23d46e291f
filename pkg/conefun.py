"""
Symmetric concave functions of the eigenvalues, their cones, gradients and
structure checks.

Two families are supported:
  sigma_k_root  f = sigma_k^{1/k} on the Garding cone {sigma_j > 0, j <= k}
  log_rho_k     f = sum over k-subsets of log(subset sum), on the cone where
                every k-subset sum is positive
"""
import itertools
import logging
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from errors import ArgumentError, DomainError, LevelSetSamplingError

logger = logging.getLogger(__name__)

FAMILIES = ('sigma_k_root', 'log_rho_k')

SIGMA_RANGE_NOTE = (
    "The rank condition is quantified over inf f <= sigma <= sup f on the boundary; "
    "for both families the tangent-cone rank is level-independent, so the rank "
    "constant is checked once and the printed sigma-range is not interpreted."
)


@dataclass(frozen=True)
class ConeFunction:
    """
    Descriptor of f: family, k and the number of eigenvalues N.

    Raises:
        ArgumentError: Unknown family or k outside [1, N]
    """
    family: str
    k: int
    N: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ArgumentError(f"unknown family {self.family!r}, expected one of {FAMILIES}")
        if not 1 <= self.k <= self.N:
            raise ArgumentError(f"k must lie in [1, {self.N}], got {self.k}")

    @property
    def sup_boundary(self) -> float:
        """sup of f over the cone boundary."""
        return 0.0 if self.family == 'sigma_k_root' else -np.inf

    @property
    def sup_cone(self) -> float:
        """sup of f over the cone; both families are unbounded above."""
        return np.inf

    @property
    def tangent_cone_rank(self) -> int:
        """Rank of the tangent cone at infinity, level-independent for both families."""
        return self.N - self.k + 1 if self.family == 'sigma_k_root' else self.k

    def describe(self) -> str:
        if self.family == 'sigma_k_root':
            return f"sigma_{self.k}^(1/{self.k}) on N={self.N}"
        return f"log rho_{self.k} on N={self.N}"


@lru_cache(maxsize=None)
def _k_subsets(N: int, k: int) -> Tuple[np.ndarray, np.ndarray]:
    subsets = np.array(list(itertools.combinations(range(N), k)), dtype=np.intp)
    membership = np.zeros((len(subsets), N))
    membership[np.arange(len(subsets))[:, None], subsets] = 1.0
    subsets.flags.writeable = False
    membership.flags.writeable = False
    return subsets, membership


def sigma_all(values) -> np.ndarray:
    """
    All elementary symmetric values (sigma_1, ..., sigma_N).

    Uses the coefficients of prod_i (x + values_i), built one factor at a time.

    Args:
        values: (..., N) array

    Returns:
        (..., N) array, entry j-1 holding sigma_j
    """
    lam = np.asarray(values, dtype=float)
    N = lam.shape[-1]
    coeffs = np.zeros(lam.shape[:-1] + (N + 1,))
    coeffs[..., 0] = 1.0
    for i in range(N):
        coeffs[..., 1:] = coeffs[..., 1:] + lam[..., i:i + 1] * coeffs[..., :-1]
    return coeffs[..., 1:]


def _sigma_excluding(values: np.ndarray, order: int) -> np.ndarray:
    # sigma_order of values with entry i removed, for every i
    lam = np.asarray(values, dtype=float)
    N = lam.shape[-1]
    if order == 0:
        return np.ones(lam.shape)
    out = np.empty(lam.shape)
    for i in range(N):
        reduced = np.delete(lam, i, axis=-1)
        out[..., i] = sigma_all(reduced)[..., order - 1]
    return out


def _check_length(f: ConeFunction, values) -> np.ndarray:
    lam = np.asarray(values, dtype=float)
    if lam.ndim < 1 or lam.shape[-1] != f.N:
        raise ArgumentError(f"expected trailing dimension {f.N}, got shape {lam.shape}")
    return lam


def cone_margin(f: ConeFunction, values) -> np.ndarray:
    """
    Distance proxy to the cone boundary, positive exactly inside the cone.

    min_{j<=k} sigma_j for the sigma family, the smallest k-subset sum
    (sum of the k smallest entries) for the log rho family.
    """
    lam = _check_length(f, values)
    if f.family == 'sigma_k_root':
        return np.min(sigma_all(lam)[..., :f.k], axis=-1)
    return np.sum(np.sort(lam, axis=-1)[..., :f.k], axis=-1)


def in_cone(f: ConeFunction, values) -> np.ndarray:
    """True where the eigenvalues lie in the open cone of f."""
    return cone_margin(f, values) > 0


def _require_cone(f: ConeFunction, lam: np.ndarray) -> None:
    margin = cone_margin(f, lam)
    if np.any(~(margin > 0)):
        raise DomainError(
            f"eigenvalues outside the cone of {f.describe()} (margin {float(np.min(margin)):.3e})")


def eval_f(f: ConeFunction, values) -> np.ndarray:
    """
    Value of f.

    Raises:
        DomainError: If any input lies outside the cone
    """
    lam = _check_length(f, values)
    _require_cone(f, lam)
    if f.family == 'sigma_k_root':
        return sigma_all(lam)[..., f.k - 1] ** (1.0 / f.k)
    subsets, _ = _k_subsets(f.N, f.k)
    return np.sum(np.log(np.sum(lam[..., subsets], axis=-1)), axis=-1)


def grad_f(f: ConeFunction, values) -> np.ndarray:
    """
    Analytic gradient of f.

    sigma family: (1/k) sigma_k^{1/k-1} sigma_{k-1}(values without i).
    log rho family: sum over k-subsets containing i of 1/(subset sum).

    Raises:
        DomainError: If any input lies outside the cone
    """
    lam = _check_length(f, values)
    _require_cone(f, lam)
    if f.family == 'sigma_k_root':
        sigma_k = sigma_all(lam)[..., f.k - 1]
        scale = sigma_k ** (1.0 / f.k - 1.0) / f.k
        return scale[..., None] * _sigma_excluding(lam, f.k - 1)
    subsets, membership = _k_subsets(f.N, f.k)
    inverse_sums = 1.0 / np.sum(lam[..., subsets], axis=-1)
    return inverse_sums @ membership


def rank_condition(f: ConeFunction, n: int, p: int) -> Tuple[bool, int, float]:
    """
    Closed-form rank test: rank >= N (n - p) / n + 1.

    Returns:
        (passed, rank, threshold)
    """
    rank = f.tangent_cone_rank
    threshold = f.N * (n - p) / n + 1
    return rank * n >= f.N * (n - p) + n, rank, threshold


def sample_cone(f: ConeFunction, count: int, rng: np.random.Generator,
                max_rounds: int = 1000) -> np.ndarray:
    """
    Random points of the cone: Gaussian vectors shifted along the diagonal,
    rejected when outside.

    Returns:
        (count, N) array
    """
    accepted: List[np.ndarray] = []
    total = 0
    scale = np.sqrt(f.N)
    for _ in range(max_rounds):
        batch = max(2 * (count - total), 16)
        draws = rng.normal(size=(batch, f.N))
        draws += rng.uniform(-0.5, 2.0, size=(batch, 1)) * scale
        keep = draws[in_cone(f, draws)]
        accepted.append(keep)
        total += len(keep)
        if total >= count:
            return np.concatenate(accepted)[:count]
    raise LevelSetSamplingError(f"could not draw {count} samples from the cone of {f.describe()}")


@dataclass
class StructureReport:
    """Sampled verification of the structure conditions on f."""
    family: str
    k: int
    n: int
    p: int
    N: int
    monotone_ok: bool
    concave_ok: bool
    symmetric_ok: bool
    s01_ok: bool
    c0_fit: float
    p4_margin: float
    p4_ok: bool
    c0_launch: float
    rank: int
    rank_threshold: float
    rank_ok: bool
    gradient_share: float
    samples_used: int
    counterexamples: List[Dict[str, Any]] = field(default_factory=list)
    sigma_range_note: str = SIGMA_RANGE_NOTE

    @property
    def passed(self) -> bool:
        return all((self.monotone_ok, self.concave_ok, self.symmetric_ok,
                    self.s01_ok, self.p4_ok, self.rank_ok))

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['passed'] = self.passed
        return data


def _record(counterexamples: List[Dict[str, Any]], condition: str, points: np.ndarray,
            values: np.ndarray, limit: int = 5) -> None:
    for point, value in zip(points[:limit], values[:limit]):
        counterexamples.append({
            'condition': condition,
            'point': [float(x) for x in np.ravel(point)],
            'value': float(value),
        })


def structure_check(f: ConeFunction, n: int, p: int, psi_range: Tuple[float, float],
                    sample_count: int, rng_seed: Optional[int] = None) -> StructureReport:
    """
    Sampled check of monotonicity, concavity, symmetry and the lower bound on
    sum f_i Lambda_i, plus the boundary margin and the closed-form rank test.

    Args:
        f: Cone function
        n, p: Dimension and form degree
        psi_range: (inf psi, sup psi)
        sample_count: Number of cone samples (>= 1)
        rng_seed: Seed for numpy's default generator

    Returns:
        StructureReport; failed flags come with recorded counterexamples
    """
    if sample_count < 1:
        raise ArgumentError("sample_count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    counterexamples: List[Dict[str, Any]] = []

    points = sample_cone(f, 2 * sample_count, rng)
    values = eval_f(f, points)
    grads = grad_f(f, points)

    worst_grad = np.min(grads, axis=-1)
    bad = worst_grad < -1e-12
    _record(counterexamples, 'monotone', points[bad], worst_grad[bad])
    monotone_ok = not np.any(bad)

    first, second = points[:sample_count], points[sample_count:]
    t = rng.uniform(0.0, 1.0, size=(sample_count, 1))
    mixed = eval_f(f, t * first + (1.0 - t) * second)
    chord = t[:, 0] * values[:sample_count] + (1.0 - t[:, 0]) * values[sample_count:]
    gap = mixed - chord
    bad = gap < -1e-10 * (1.0 + np.abs(chord))
    _record(counterexamples, 'concave', first[bad], gap[bad])
    concave_ok = not np.any(bad)

    permuted = rng.permuted(points, axis=-1)
    drift = np.abs(eval_f(f, permuted) - values)
    bad = drift > 1e-12 * np.maximum(1.0, np.abs(values))
    _record(counterexamples, 'symmetric', points[bad], drift[bad])
    symmetric_ok = not np.any(bad)

    grad_sum = np.sum(grads, axis=-1)
    pairing = np.sum(grads * points, axis=-1)
    ratio = pairing / grad_sum
    c0_fit = max(0.0, float(-np.min(ratio)))
    # sum f_i Lambda_i is f (degree-one homogeneity) or the number of k-subsets,
    # both positive on the cone, so the lower bound holds with C0 = 0
    if f.family == 'sigma_k_root':
        expected = values
    else:
        expected = np.full_like(values, float(len(_k_subsets(f.N, f.k)[0])))
    scale = 1.0 + np.abs(expected) + np.sum(np.abs(grads * points), axis=-1)
    defect = np.abs(pairing - expected)
    bad = defect > 1e-10 * scale
    _record(counterexamples, 's01', points[bad], defect[bad])
    s01_ok = bool(np.isfinite(c0_fit) and not np.any(bad))

    psi_low, psi_high = float(psi_range[0]), float(psi_range[1])
    p4_margin = psi_low - f.sup_boundary
    c0_launch = f.sup_cone - psi_high

    rank_ok, rank, threshold = rank_condition(f, n, p)
    share = np.sum(np.sort(grads, axis=-1)[..., :f.N - rank + 1], axis=-1) / grad_sum
    if not rank_ok:
        logger.info("rank condition fails for %s at n=%d, p=%d: rank %d < %.3f",
                    f.describe(), n, p, rank, threshold)

    return StructureReport(
        family=f.family, k=f.k, n=n, p=p, N=f.N,
        monotone_ok=monotone_ok,
        concave_ok=concave_ok,
        symmetric_ok=symmetric_ok,
        s01_ok=s01_ok,
        c0_fit=c0_fit,
        p4_margin=float(p4_margin),
        p4_ok=bool(p4_margin > 0),
        c0_launch=float(c0_launch),
        rank=rank,
        rank_threshold=float(threshold),
        rank_ok=bool(rank_ok),
        gradient_share=float(np.min(share)),
        samples_used=2 * sample_count,
        counterexamples=counterexamples,
    )


@dataclass
class TangentConeResult:
    """Largest epsilon satisfying the tangent-cone inequality on every sample."""
    epsilon: float
    ok: bool
    samples: np.ndarray = field(repr=False)
    per_sample: np.ndarray = field(repr=False)


def _level_point(f: ConeFunction, q: np.ndarray, sigma_level: float) -> np.ndarray:
    # Slide q along -1 until f(q - s 1) = sigma_level
    ones = np.ones_like(q)
    inside, outside = 0.0, float(np.max(q)) + 1.0
    for _ in range(200):
        middle = 0.5 * (inside + outside)
        if in_cone(f, q - middle * ones):
            inside = middle
        else:
            outside = middle

    def gap(s: float) -> float:
        return float(eval_f(f, q - s * ones)) - sigma_level

    upper = inside
    if gap(upper) >= 0:
        raise LevelSetSamplingError("level is not above the boundary values along the diagonal")
    lower, step = 0.0, 1.0
    for _ in range(200):
        if gap(lower) > 0:
            break
        lower -= step
        step *= 2.0
    else:
        raise LevelSetSamplingError("could not bracket the level set from above")
    return q - brentq(gap, lower, upper, xtol=1e-14, rtol=4 * np.finfo(float).eps) * ones


def verify_tangent_cone_inequality(f: ConeFunction, sigma_level: float, mu, R: float,
                                   sample_count: int,
                                   rng_seed: Optional[int] = None) -> TangentConeResult:
    """
    Fit epsilon in sum f_i (mu_i - lambda_i) >= epsilon sum f_i + epsilon over
    samples lambda of the level set {f = sigma_level} with |lambda| >= R.

    Args:
        f: Cone function
        sigma_level: Level, above sup of f on the cone boundary
        mu: Candidate direction in the tangent cone at infinity
        R: Minimal sample norm
        sample_count: Number of level-set samples
        rng_seed: Seed for numpy's default generator

    Returns:
        TangentConeResult with ok = epsilon > 0

    Raises:
        LevelSetSamplingError: If not enough samples with |lambda| >= R are found
    """
    mu = _check_length(f, mu)
    if not sigma_level > f.sup_boundary:
        raise ArgumentError(f"sigma_level must exceed {f.sup_boundary}")
    if sample_count < 1:
        raise ArgumentError("sample_count must be >= 1")
    rng = np.random.default_rng(rng_seed)

    samples: List[np.ndarray] = []
    for _ in range(50 * sample_count):
        direction = sample_cone(f, 1, rng)[0]
        radius = rng.uniform(R, 4.0 * R) + abs(sigma_level)
        point = _level_point(f, radius * direction / np.linalg.norm(direction), sigma_level)
        if np.linalg.norm(point) >= R:
            samples.append(point)
            if len(samples) == sample_count:
                break
    else:
        raise LevelSetSamplingError(
            f"found {len(samples)} of {sample_count} level-set samples with norm >= {R}")

    lam = np.array(samples)
    grads = grad_f(f, lam)
    per_sample = np.sum(grads * (mu - lam), axis=-1) / (np.sum(grads, axis=-1) + 1.0)
    epsilon = float(np.min(per_sample))
    return TangentConeResult(epsilon=epsilon, ok=epsilon > 0, samples=lam, per_sample=per_sample)
