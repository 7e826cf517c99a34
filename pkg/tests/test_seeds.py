import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from countingstars.errors import CantorOverflow, EmptySet, SeedSearchOverflow
from countingstars.flows import FlowSet, FlowKey
from countingstars.seeds import (
    build_seed_table,
    build_seed_tables,
    cantor_pair,
    cantor_pair_array,
    cantor_unpair,
    is_perfect_modulus,
    min_perfect_modulus,
    min_perfect_modulus_bruteforce,
    read_seed_records,
    triangular,
    write_seed_records,
)


@pytest.mark.parametrize("pair,value", [((0, 0), 0), ((1, 2), 8), ((2, 1), 7)])
def test_cantor_values(pair, value):
    assert cantor_pair(*pair) == value
    assert cantor_unpair(value) == pair


@given(st.integers(0, 2**30), st.integers(0, 2**30))
def test_cantor_band(s, d):
    t = cantor_pair(s, d)
    w = s + d
    assert triangular(w) <= t < triangular(w + 1)
    assert cantor_unpair(t) == (s, d)


def test_cantor_overflow():
    with pytest.raises(CantorOverflow):
        cantor_pair(2**33, 2**33)
    assert cantor_pair(2**33, 2**33, bits=None) > 2**64


def test_cantor_array_matches_scalar():
    rng = np.random.default_rng(0)
    s, d = rng.integers(0, 5000, size=(2, 1000))
    assert cantor_pair_array(s, d).tolist() == [cantor_pair(int(a), int(b)) for a, b in zip(s, d)]


@pytest.mark.parametrize("ids,h", [({0, 1, 2, 3}, 4), ({0, 4, 8}, 3), ({0, 3, 6}, 4), ({42}, 1)])
def test_modulus_examples(ids, h):
    assert min_perfect_modulus(ids) == h
    assert min_perfect_modulus_bruteforce(ids) == h


def test_empty_set():
    with pytest.raises(EmptySet):
        min_perfect_modulus([])


def test_search_cap():
    ids = list(range(0, 400, 20))
    with pytest.raises(SeedSearchOverflow):
        min_perfect_modulus(ids, search_factor=1)
    assert min_perfect_modulus(ids, search_factor=None) == min_perfect_modulus_bruteforce(ids)


@settings(max_examples=200, deadline=None)
@given(st.sets(st.integers(0, 10**6 - 1), min_size=1, max_size=64))
def test_modulus_matches_bruteforce(ids):
    h = min_perfect_modulus(ids, search_factor=None)
    assert h == min_perfect_modulus_bruteforce(ids)
    assert h >= len(ids)
    assert is_perfect_modulus(list(ids), h)


def test_tables_and_sentinel():
    sets = [FlowSet(0, 5, (FlowKey(0, 1), FlowKey(1, 0), FlowKey(2, 1))), FlowSet(1, 5, ())]
    tables = build_seed_tables(sets)
    assert tables[0].h >= tables[0].n == 3
    assert is_perfect_modulus(tables[0].flow_ids, tables[0].h)
    assert (tables[1].h, tables[1].n) == (1, 0)
    assert build_seed_tables(sets) == tables
    assert tables[0].contains(cantor_pair(2, 1)) and not tables[0].contains(cantor_pair(5, 5))


def test_seed_records_roundtrip():
    tables = [build_seed_table(s, 2, range(s, 40, 3)) for s in range(3)]
    buf = io.StringIO()
    write_seed_records(tables, buf)
    buf.seek(0)
    recs = read_seed_records(buf)
    assert [int(r["h"]) for r in recs] == [t.h for t in tables]
    assert [r["checksum"] for r in recs] == [t.checksum() for t in tables]
