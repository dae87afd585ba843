"""Fixed-magnetization sector of an L-site spin-1/2 chain.

Site ``i`` (1-based) lives on bit ``L - i``, so site 1 is the most significant
bit. A set bit is an up spin with S^z = +1/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np

MAX_SITES = 24


@lru_cache(maxsize=None)
def binomial_table(n: int) -> np.ndarray:
    """``table[m, k] = C(m, k)`` for ``0 <= m, k <= n`` as int64."""
    table = np.zeros((n + 1, n + 1), dtype=np.int64)
    for m in range(n + 1):
        for k in range(m + 1):
            table[m, k] = comb(m, k)
    return table


def popcount(x):
    """Number of set bits, elementwise for integer arrays."""
    x = np.asarray(x, dtype=np.int64)
    count = np.zeros_like(x)
    while np.any(x):
        count += x & 1
        x = x >> 1
    return count


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """All L-bit configurations with ``n_up`` set bits, ascending."""

    L: int
    n_up: int
    states: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.states)

    def spins(self) -> np.ndarray:
        """S^z eigenvalues, shape ``(dim, L)``; column ``i`` is site ``i + 1``."""
        shifts = np.arange(self.L - 1, -1, -1)
        bits = (self.states[:, None] >> shifts[None, :]) & 1
        return bits - 0.5

    def rank(self, state):
        return rank(self, state)

    def unrank(self, k):
        return unrank(self, k)

    def __eq__(self, other):
        return (
            isinstance(other, SectorBasis)
            and self.L == other.L
            and self.n_up == other.n_up
        )

    def __hash__(self):
        return hash((self.L, self.n_up))


@lru_cache(maxsize=64)
def enumerate_sector(L: int, n_up: int) -> SectorBasis:
    """Enumerate the sector with ``n_up`` up spins on ``L`` sites.

    >>> enumerate_sector(4, 2).states.tolist()
    [3, 5, 6, 9, 10, 12]
    """
    if isinstance(L, bool) or not isinstance(L, (int, np.integer)) or not 1 <= L <= MAX_SITES:
        raise ValueError(f"L must be an integer in [1, {MAX_SITES}], got {L!r}")
    if isinstance(n_up, bool) or not isinstance(n_up, (int, np.integer)) or not 0 <= n_up <= L:
        raise ValueError(f"n_up must be an integer in [0, {L}], got {n_up!r}")
    L, n_up = int(L), int(n_up)
    states = np.fromiter(
        (sum(1 << p for p in bits) for bits in combinations(range(L), n_up)),
        dtype=np.int64,
        count=comb(L, n_up),
    )
    states.sort()
    states.setflags(write=False)
    return SectorBasis(L, n_up, states)


def rank(basis: SectorBasis, state):
    """Index of ``state`` in ``basis.states`` via the combinatorial number system.

    Accepts a scalar or an integer array. A state with bits at positions
    ``p_1 < p_2 < ... < p_k`` has rank ``sum_j C(p_j, j)``.
    """
    scalar = np.ndim(state) == 0
    s = np.atleast_1d(np.asarray(state, dtype=np.int64))
    if np.any(s < 0) or np.any(s >> basis.L):
        raise ValueError(f"state outside {basis.L}-bit range")
    if np.any(popcount(s) != basis.n_up):
        raise ValueError(f"state popcount differs from n_up={basis.n_up}")
    table = binomial_table(basis.L)
    out = np.zeros_like(s)
    seen = np.zeros_like(s)
    for p in range(basis.L):
        bit = (s >> p) & 1
        seen += bit
        out += bit * table[p, seen]
    return int(out[0]) if scalar else out


def unrank(basis: SectorBasis, k):
    """Inverse of :func:`rank`: the configuration at index ``k``."""
    scalar = np.ndim(k) == 0
    idx = np.atleast_1d(np.asarray(k, dtype=np.int64)).copy()
    if np.any(idx < 0) or np.any(idx >= basis.dim):
        raise IndexError(f"index out of range for sector of dim {basis.dim}")
    table = binomial_table(basis.L)
    out = np.zeros_like(idx)
    remaining = np.full_like(idx, basis.n_up)
    for p in range(basis.L - 1, -1, -1):
        c = table[p, remaining]
        take = (remaining > 0) & (idx >= c)
        out |= take.astype(np.int64) << p
        idx -= np.where(take, c, 0)
        remaining -= take
    return int(out[0]) if scalar else out
