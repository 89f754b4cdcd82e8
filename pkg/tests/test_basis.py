import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jchsim.basis import (
    Level,
    LocalState,
    enumerate_sector,
    full_basis,
    local_states,
    sector_dimension,
)
from jchsim.errors import EmptySectorError


def brute_force_configs(L, N, n_max):
    loc = [(n, lv) for n in range(n_max + 1) for lv in range(3)]
    return [c for c in itertools.product(loc, repeat=L) if sum(n + lv for n, lv in c) == N]


def generating_function_count(L, N, n_max):
    # per-site polynomial: coefficient q = number of local states of charge q
    per_site = np.zeros(n_max + 3, dtype=object)
    for n in range(n_max + 1):
        for lv in range(3):
            per_site[n + lv] += 1
    poly = np.array([1], dtype=object)
    for _ in range(L):
        poly = np.convolve(poly, per_site)
    return int(poly[N]) if N < len(poly) else 0


def test_local_states_minimal():
    states = local_states(0)
    assert states == [LocalState(0, Level.G), LocalState(0, Level.E1), LocalState(0, Level.E2)]


def test_local_states_count():
    assert len(local_states(4)) == 15


def test_local_charge():
    assert LocalState(1, Level.E2).charge == 3


def test_local_states_order():
    states = local_states(3)
    keys = [(s.n_p, int(s.level)) for s in states]
    assert keys == sorted(keys)


def test_single_site_charge_two():
    b = enumerate_sector(1, 2, 2)
    assert set(b.configs) == {
        (LocalState(2, Level.G),),
        (LocalState(1, Level.E1),),
        (LocalState(0, Level.E2),),
    }


def test_two_sites_charge_one():
    b = enumerate_sector(2, 1, 1)
    g0, g1, e1 = LocalState(0, Level.G), LocalState(1, Level.G), LocalState(0, Level.E1)
    assert set(b.configs) == {(g1, g0), (e1, g0), (g0, g1), (g0, e1)}
    assert b.dim == 4


def test_d66_regression():
    # frozen from the generating-function count; n_max = 6 = N is untruncated
    assert generating_function_count(6, 6, 6) == 10207
    assert enumerate_sector(6, 6, 6).dim == 10207
    assert sector_dimension(6, 6, 6) == 10207


@pytest.mark.parametrize(
    "L,N,n_max,expected",
    [(1, 0, 0, 1), (1, 1, 1, 2), (2, 2, 2, 10)],
)
def test_sector_dimension_small(L, N, n_max, expected):
    assert len(brute_force_configs(L, N, n_max)) == expected
    assert sector_dimension(L, N, n_max) == expected


def test_empty_sector_raises():
    with pytest.raises(EmptySectorError):
        enumerate_sector(2, 2 * (1 + 2) + 1, 1)
    assert sector_dimension(2, 7, 1) == 0


def test_default_truncation_is_N():
    assert enumerate_sector(3, 4).n_max == 4


def test_exhaustive_dimension_sweep():
    for L in range(1, 5):
        for n_max in range(0, 5):
            for N in range(0, 9):
                dim = sector_dimension(L, N, n_max)
                if N > L * (n_max + 2):
                    assert dim == 0
                    continue
                assert enumerate_sector(L, N, n_max).dim == dim


@pytest.mark.parametrize("L,n_max", [(1, 3), (2, 2), (3, 1), (4, 0)])
def test_sector_sum_is_full_dimension(L, n_max):
    total = sum(sector_dimension(L, N, n_max) for N in range(L * (n_max + 2) + 1))
    assert total == (3 * (n_max + 1)) ** L == full_basis(L, n_max).dim


@pytest.mark.parametrize("L,N,n_max", [(1, 3, 3), (2, 3, 2), (3, 4, 2)])
def test_enumeration_matches_brute_force(L, N, n_max):
    b = enumerate_sector(L, N, n_max)
    expect = brute_force_configs(L, N, n_max)
    got = [tuple((s.n_p, int(s.level)) for s in c) for c in b.configs]
    assert got == sorted(expect)
    assert all(sum(s.charge for s in c) == N for c in b.configs)


def test_strict_lexicographic_order_and_index():
    b = enumerate_sector(3, 5, 3)
    keys = [tuple((s.n_p, int(s.level)) for s in c) for c in b.configs]
    assert all(x < y for x, y in zip(keys, keys[1:]))
    for k, c in enumerate(b.configs):
        assert b.index(c) == k
        assert b.unrank(k) == c


def test_index_rejects_foreign_configuration():
    b = enumerate_sector(2, 2, 2)
    with pytest.raises(KeyError):
        b.index((LocalState(0, Level.G), LocalState(0, Level.G)))


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_rank_unrank_roundtrip_random(data):
    L = data.draw(st.integers(1, 4))
    n_max = data.draw(st.integers(0, 3))
    levels = data.draw(st.lists(st.integers(0, 2), min_size=L, max_size=L))
    photons = data.draw(st.lists(st.integers(0, n_max), min_size=L, max_size=L))
    config = tuple(LocalState(n, Level(lv)) for n, lv in zip(photons, levels))
    N = sum(s.charge for s in config)
    b = enumerate_sector(L, N, n_max)
    assert b.unrank(b.index(config)) == config


def test_full_basis_charges_cover_all_sectors():
    fb = full_basis(2, 1)
    q = fb.charges()
    for N in range(0, 7):
        assert np.count_nonzero(q == N) == sector_dimension(2, N, 1)
