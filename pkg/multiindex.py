"""
Strictly increasing multi-indices, their fixed order, and the sign conventions
used to address (p,p) coefficient matrices.

All public indices are 1-based. The table also carries 0-based insertion
blocks that the vectorized kernels in ppalgebra and linop index with.
"""
import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Sequence, Tuple

import numpy as np

from errors import ArgumentError

MultiIndex = Tuple[int, ...]


def validate_multi_index(index: Sequence[int], n: int, length: int) -> MultiIndex:
    """
    Check that ``index`` is a strictly increasing tuple of ``length`` entries in [1, n].

    Returns:
        The index as a tuple of ints

    Raises:
        ArgumentError: If any invariant fails
    """
    entries = tuple(int(i) for i in index)
    if len(entries) != length:
        raise ArgumentError(f"multi-index {entries} must have length {length}")
    if any(i < 1 or i > n for i in entries):
        raise ArgumentError(f"multi-index {entries} has entries outside [1, {n}]")
    if any(a >= b for a, b in zip(entries, entries[1:])):
        raise ArgumentError(f"multi-index {entries} is not strictly increasing")
    return entries


@dataclass(frozen=True, eq=False)
class InsertionBlock:
    """
    One (p-1)-index I' with every admissible insertion I'_i.

    free holds the 0-based i not in I', rows the 0-based table row of I'_i and
    signs the factor (-1)^{(i|I'_i)}.
    """
    base: MultiIndex
    free: np.ndarray
    rows: np.ndarray
    signs: np.ndarray


@dataclass(frozen=True)
class MultiIndexTable:
    """All p-element multi-indices of {1..n} in ascending order, with positions."""
    n: int
    p: int
    indices: Tuple[MultiIndex, ...]
    blocks: Tuple[InsertionBlock, ...] = field(repr=False, compare=False)
    _rank: Dict[MultiIndex, int] = field(repr=False, compare=False)

    @property
    def N(self) -> int:
        return len(self.indices)

    def rank_of(self, index: Sequence[int]) -> int:
        """1-based position of ``index`` in the table."""
        key = tuple(int(i) for i in index)
        try:
            return self._rank[key]
        except KeyError:
            raise ArgumentError(f"{key} is not a {self.p}-index of {{1..{self.n}}}")


def position(i: int, index: Sequence[int]) -> int:
    """
    Position (i|I) of ``i`` inside ``index``, 1-based.

    Raises:
        ArgumentError: If i is not an entry of the index
    """
    entries = tuple(index)
    if i not in entries:
        raise ArgumentError(f"{i} is not an entry of {entries}")
    return entries.index(i) + 1


def insert(base: Sequence[int], i: int) -> MultiIndex:
    """
    Insert ``i`` into a (p-1)-index keeping the entries sorted.

    Raises:
        ArgumentError: If i already belongs to the index
    """
    entries = tuple(base)
    if i in entries:
        raise ArgumentError(f"{i} already belongs to {entries}")
    return tuple(sorted(entries + (i,)))


def sign_exponent(i: int, index_i: Sequence[int], j: int, index_j: Sequence[int]) -> int:
    """
    The sign (-1)^{(i|I) + (j|J)}.

    Returns:
        +1 or -1
    """
    exponent = position(i, index_i) + position(j, index_j)
    return 1 if exponent % 2 == 0 else -1


def _frozen(values, dtype) -> np.ndarray:
    array = np.asarray(values, dtype=dtype)
    array.flags.writeable = False
    return array


@lru_cache(maxsize=None)
def enumerate_table(n: int, p: int) -> MultiIndexTable:
    """
    Enumerate the index set for (n, p) in the order "i_l < j_l at the first
    non-equal pair", which is the lexicographic order of itertools.combinations.

    Tables are cached and immutable, so one instance serves every caller.

    Raises:
        ArgumentError: Unless 1 <= p <= n
    """
    if not isinstance(n, (int, np.integer)) or not isinstance(p, (int, np.integer)):
        raise ArgumentError("n and p must be integers")
    n, p = int(n), int(p)
    if n < 1 or p < 1 or p > n:
        raise ArgumentError(f"need 1 <= p <= n, got n={n}, p={p}")

    indices = tuple(itertools.combinations(range(1, n + 1), p))
    rank = {index: k + 1 for k, index in enumerate(indices)}

    blocks = []
    for base in itertools.combinations(range(1, n + 1), p - 1):
        free, rows, signs = [], [], []
        for i in range(1, n + 1):
            if i in base:
                continue
            inserted = insert(base, i)
            free.append(i - 1)
            rows.append(rank[inserted] - 1)
            signs.append(-1.0 if position(i, inserted) % 2 else 1.0)
        blocks.append(InsertionBlock(
            base=base,
            free=_frozen(free, np.intp),
            rows=_frozen(rows, np.intp),
            signs=_frozen(signs, float),
        ))

    return MultiIndexTable(n=n, p=p, indices=indices, blocks=tuple(blocks), _rank=rank)
