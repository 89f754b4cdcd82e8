"""
Local and many-body bases for an array of cavities, each holding a photon mode
and a three-level ladder atom.

A local state is (n_p, level) with level in {g, e1, e2}. It is stored as the
integer ``s = 3 * n_p + level``, so sorting by ``s`` is sorting by
(n_p, level) with g < e1 < e2. A many-body configuration of L sites is the
base-``d`` number with site 0 as the most significant digit,
``d = 3 * (n_max + 1)``; numeric order of these codes is lexicographic order
of the configuration tuples.

The conserved charge of a local state is ``n_p + w(level)`` with weights
0, 1, 2 for g, e1, e2.
"""

from __future__ import annotations

from enum import IntEnum
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import EmptySectorError

__all__ = [
    "Level",
    "LocalState",
    "local_states",
    "local_dim",
    "SectorBasis",
    "FullBasis",
    "enumerate_sector",
    "sector_dimension",
    "full_basis",
]


class Level(IntEnum):
    G = 0
    E1 = 1
    E2 = 2

    @property
    def weight(self) -> int:
        return int(self)

    def __str__(self) -> str:
        return ("g", "e1", "e2")[self]


class LocalState(NamedTuple):
    n_p: int
    level: Level

    @property
    def charge(self) -> int:
        return self.n_p + Level(self.level).weight

    @property
    def index(self) -> int:
        return 3 * self.n_p + int(self.level)

    @classmethod
    def from_index(cls, s: int) -> "LocalState":
        return cls(int(s) // 3, Level(int(s) % 3))

    def __repr__(self) -> str:
        return f"|{self.n_p},{Level(self.level)}>"


def local_dim(n_max: int) -> int:
    return 3 * (n_max + 1)


def local_states(n_max: int) -> list[LocalState]:
    """All single-cavity states up to ``n_max`` photons, ordered by (n_p, level)."""
    if n_max < 0:
        raise ValueError(f"n_max must be non-negative, got {n_max}")
    return [LocalState.from_index(s) for s in range(local_dim(n_max))]


def local_charges(n_max: int) -> np.ndarray:
    s = np.arange(local_dim(n_max))
    return s // 3 + s % 3


def _check_code_range(L: int, d: int) -> None:
    if d ** L >= 2**62:
        raise ValueError(f"configuration codes overflow int64 for L={L}, d={d}")


def _powers(L: int, d: int) -> np.ndarray:
    return d ** np.arange(L - 1, -1, -1, dtype=np.int64)


def _digits(codes: np.ndarray, L: int, d: int) -> np.ndarray:
    out = np.empty((codes.size, L), dtype=np.int16)
    rest = codes.copy()
    for site in range(L - 1, -1, -1):
        out[:, site] = rest % d
        rest //= d
    return out


class _CodedBasis:
    """Shared machinery for bases stored as sorted integer codes."""

    L: int
    n_max: int
    codes: np.ndarray

    @property
    def d(self) -> int:
        return local_dim(self.n_max)

    @property
    def dim(self) -> int:
        return int(self.codes.size)

    def __len__(self) -> int:
        return self.dim

    @property
    def powers(self) -> np.ndarray:
        return _powers(self.L, self.d)

    @property
    def digits(self) -> np.ndarray:
        """(dim, L) array of local state indices."""
        cached = getattr(self, "_digits_cache", None)
        if cached is None:
            cached = _digits(self.codes, self.L, self.d)
            cached.setflags(write=False)
            self._digits_cache = cached
        return cached

    @property
    def photons(self) -> np.ndarray:
        return self.digits // 3

    @property
    def levels(self) -> np.ndarray:
        return self.digits % 3

    def site_charges(self) -> np.ndarray:
        dg = self.digits
        return dg // 3 + dg % 3

    def encode(self, config: Sequence[LocalState | tuple[int, int]]) -> int:
        if len(config) != self.L:
            raise ValueError(f"configuration has {len(config)} sites, basis has {self.L}")
        code = 0
        for st in config:
            n_p, level = int(st[0]), int(st[1])
            if not (0 <= n_p <= self.n_max and 0 <= level <= 2):
                raise ValueError(f"local state {st} outside truncation n_max={self.n_max}")
            code = code * self.d + 3 * n_p + level
        return code

    def decode(self, code: int) -> tuple[LocalState, ...]:
        out = []
        for _ in range(self.L):
            out.append(LocalState.from_index(code % self.d))
            code //= self.d
        return tuple(reversed(out))

    def rank(self, codes: np.ndarray | Iterable[int]) -> np.ndarray:
        """Ordinals of ``codes``; -1 for codes not in the basis."""
        codes = np.asarray(codes, dtype=np.int64)
        pos = np.searchsorted(self.codes, codes)
        pos_c = np.minimum(pos, self.dim - 1)
        hit = self.codes[pos_c] == codes
        return np.where(hit, pos_c, -1)

    def index(self, config: Sequence[LocalState | tuple[int, int]]) -> int:
        k = int(self.rank([self.encode(config)])[0])
        if k < 0:
            raise KeyError(f"configuration {config} not in basis")
        return k

    def unrank(self, k: int) -> tuple[LocalState, ...]:
        return self.decode(int(self.codes[k]))

    @property
    def configs(self) -> list[tuple[LocalState, ...]]:
        return [self.decode(int(c)) for c in self.codes]


class SectorBasis(_CodedBasis):
    """Configurations of L cavities with total charge exactly N."""

    def __init__(self, L: int, N: int, n_max: int, codes: np.ndarray):
        self.L = L
        self.N = N
        self.n_max = n_max
        self.codes = codes
        self.codes.setflags(write=False)

    def __repr__(self) -> str:
        return f"SectorBasis(L={self.L}, N={self.N}, n_max={self.n_max}, dim={self.dim})"


class FullBasis(_CodedBasis):
    """All (3(n_max+1))**L configurations, every charge mixed. Ordinal == code."""

    def __init__(self, L: int, n_max: int):
        d = local_dim(n_max)
        _check_code_range(L, d)
        self.L = L
        self.n_max = n_max
        self.codes = np.arange(d**L, dtype=np.int64)
        self.codes.setflags(write=False)

    def rank(self, codes):
        codes = np.asarray(codes, dtype=np.int64)
        return np.where((codes >= 0) & (codes < self.dim), codes, -1)

    def charges(self) -> np.ndarray:
        return self.site_charges().sum(axis=1)

    def __repr__(self) -> str:
        return f"FullBasis(L={self.L}, n_max={self.n_max}, dim={self.dim})"


def full_basis(L: int, n_max: int) -> FullBasis:
    return FullBasis(L, n_max)


def enumerate_sector(L: int, N: int, n_max: int | None = None) -> SectorBasis:
    """
    Enumerate the fixed-charge sector. ``n_max`` defaults to ``N``, which is
    never a restriction since no site can hold more photons than the total
    charge.
    """
    if n_max is None:
        n_max = max(N, 0)
    if L < 1 or N < 0 or n_max < 0:
        raise ValueError(f"need L >= 1, N >= 0, n_max >= 0 (got {L}, {N}, {n_max})")
    qmax = n_max + 2
    if N > L * qmax:
        raise EmptySectorError(f"no configuration of {L} sites carries charge {N} at n_max={n_max}")
    d = local_dim(n_max)
    _check_code_range(L, d)
    q_loc = local_charges(n_max)

    codes = np.zeros(1, dtype=np.int64)
    charge = np.zeros(1, dtype=np.int64)
    for site in range(L):
        remaining = (L - site - 1) * qmax
        new_codes, new_charge = [], []
        for s in range(d):
            c = charge + q_loc[s]
            keep = (c <= N) & (c + remaining >= N)
            if keep.any():
                new_codes.append(codes[keep] * d + s)
                new_charge.append(c[keep])
        codes = np.concatenate(new_codes)
        charge = np.concatenate(new_charge)
    codes.sort()
    return SectorBasis(L, N, n_max, codes)


def sector_dimension(L: int, N: int, n_max: int | None = None) -> int:
    """Size of the charge-N sector, counted by convolving per-site charge multiplicities."""
    if n_max is None:
        n_max = max(N, 0)
    if N < 0 or N > L * (n_max + 2):
        return 0
    per_site = [0] * (n_max + 3)
    for q in local_charges(n_max):
        per_site[int(q)] += 1
    counts = [1] + [0] * N
    for _ in range(L):
        nxt = [0] * (N + 1)
        for total, ways in enumerate(counts):
            if not ways:
                continue
            for q, m in enumerate(per_site):
                if total + q > N:
                    break
                nxt[total + q] += ways * m
        counts = nxt
    return counts[N]
