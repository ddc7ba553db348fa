import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gwsnake.gw import sample_conditioned
from gwsnake.lineage import (
    DimensionMismatch,
    InvalidWindow,
    compute_lineage,
    g_numerators,
    g_process,
    g_to_csv,
    lineage_of,
    lineage_ratio,
    path_statistics,
    restricted_lineage,
)
from gwsnake.multinomial import IndexSetIK
from gwsnake.trees import tree_from_degrees

from conftest import BINARY, FOUR, TERNARY, critical_laws, trees

IK2 = IndexSetIK(BINARY)
IK4 = IndexSetIK(FOUR)
T5 = tree_from_degrees((2, 2, 0, 0, 0))


def test_lineage_examples():
    table = compute_lineage(T5, IK2)
    assert IK2.to_dict(table.counts[2]) == {(2, 1): 2}
    assert IK2.to_dict(table.counts[4]) == {(2, 2): 1}
    assert not table.counts[0].any()
    assert table.depth.tolist() == [0, 1, 2, 2, 1]


def test_restricted_lineage_examples():
    assert IK2.to_dict(restricted_lineage(T5, IK2, 2, 1)) == {(2, 1): 1}
    assert not restricted_lineage(T5, IK2, 2, 0).any()
    assert restricted_lineage(T5, IK2, 2, 2).tolist() == lineage_of(T5, IK2, 2).tolist()
    with pytest.raises(InvalidWindow):
        restricted_lineage(T5, IK2, 2, 3)


def test_g_process_example():
    table = compute_lineage(T5, IK2)
    g = g_process(T5, table, IK2)
    np.testing.assert_allclose(g(0.5)[1:], [1 / 4**0.25, -1 / 4**0.25])
    assert not g(0.0).any()
    np.testing.assert_allclose(g(0.5)[1:], [0.7071067811865476, -0.7071067811865476])


def test_g_process_errors():
    table = compute_lineage(T5, IK2)
    with pytest.raises(DimensionMismatch):
        g_process(tree_from_degrees((2, 0, 0)), table, IK2)
    with pytest.raises(DimensionMismatch):
        g_process(T5, table, IK4)
    with pytest.raises(DimensionMismatch):
        compute_lineage(tree_from_degrees((3, 0, 0, 0)), IK2)


def test_g_interpolation_follows_fractional_part():
    t = sample_conditioned(BINARY, 40, 1)
    table = compute_lineage(t, IK2)
    g = g_process(t, table, IK2)
    s = 0.3137
    l = math.floor(40 * s)
    frac = 40 * s - l
    raw = table.counts - np.outer(table.depth, IK2.p)
    expected = (raw[l] + frac * (raw[l + 1] - raw[l])) / 40**0.25
    np.testing.assert_allclose(g(s), expected, rtol=1e-14)


def test_g_csv():
    g = g_process(T5, compute_lineage(T5, IK2), IK2)
    lines = g_to_csv(g, IK2).splitlines()
    assert lines[0] == "s,k,j,value"
    assert len(lines) == 1 + 5 * 3
    assert lines[1 + 2 * 3 + 1].startswith("0.5,2,1,0.707")


def test_path_statistics_examples():
    st_ = path_statistics(tree_from_degrees((2, 0, 0)), IK2)
    assert st_.max_increment == 1 and st_.last_depth == 1
    st_ = path_statistics(tree_from_degrees((0,)), IK2)
    assert (st_.max_increment, st_.last_depth, st_.lineage_ratio) == (0, 0, 0.0)
    st_ = path_statistics(T5, IK2)
    assert st_.max_increment == 1 and st_.last_depth == 1


@given(trees(max_degree=4, max_size=80))
def test_lineage_matches_direct_walk(t):
    table = compute_lineage(t, IK4)
    for u in range(t.size):
        assert table.counts[u].tolist() == lineage_of(t, IK4, u).tolist()


@given(trees(max_degree=4, max_size=80))
def test_conservation_and_windows(t):
    table = compute_lineage(t, IK4)
    assert np.array_equal(table.counts.sum(axis=1), t.depth)
    for u in range(0, t.size, 3):
        prev = None
        for l in range(int(t.depth[u]) + 1):
            w = restricted_lineage(t, IK4, u, l)
            assert w.sum() == l
            if prev is not None:
                assert np.all(w >= prev)
            prev = w
        assert prev.tolist() == table.counts[u].tolist()


@given(critical_laws, st.integers(1, 400), st.integers(0, 2**32))
def test_g_sums_to_zero_exactly(mu, n, seed):
    from gwsnake.gw import size_supported
    if not size_supported(mu, n):
        return
    t = sample_conditioned(mu, n, seed)
    ik = IndexSetIK(mu)
    num, q = g_numerators(compute_lineage(t, ik), ik)
    assert all(sum(row) == 0 for row in num)


def _brute_ratio(t, ik):
    n = t.edges
    best = 0.0
    for u in range(1, t.size):
        for l in range(1, int(t.depth[u]) + 1):
            w = restricted_lineage(t, ik, u, l)
            best = max(best, float((np.abs(w - l * ik.p) / math.sqrt(l * math.log(n))).max()))
    return best


@pytest.mark.parametrize("seed", range(4))
def test_lineage_ratio_full_scan_matches_brute_force(seed):
    for mu in (BINARY, TERNARY):
        n = 150
        t = sample_conditioned(mu, n, seed)
        ik = IndexSetIK(mu)
        assert lineage_ratio(t, ik) == pytest.approx(_brute_ratio(t, ik), rel=1e-12)


def test_lineage_ratio_subsample_is_lower_bound():
    t = sample_conditioned(BINARY, 3000, 4)
    full = lineage_ratio(t, IK2, full_scan_limit=10**6)
    sub = lineage_ratio(t, IK2)
    assert 0 < sub <= full
