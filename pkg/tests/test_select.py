import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_bh, brute_row_alpha
from startrek.errors import InvalidInput
from startrek.quantile import BootstrapEnsemble, EnsembleRows
from startrek.select import (
    HypothesisConfig,
    bh_select,
    node_alpha,
    row_alpha,
    skipdown_test,
    startrek,
)


def test_config_validation():
    with pytest.raises(InvalidInput):
        HypothesisConfig(0, 0.1)
    with pytest.raises(InvalidInput):
        HypothesisConfig(3, 1.0)
    with pytest.raises(InvalidInput):
        HypothesisConfig(5, 0.1).check_dimension(4)


@pytest.mark.parametrize("seed", range(30))
def test_row_alpha_matches_explicit_sets(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(3, 9))
    B = int(rng.integers(5, 40))
    # integer-valued to provoke ties
    stats = rng.integers(0, 6, m).astype(float)
    draws = rng.integers(0, 6, (B, m)).astype(float)
    k = int(rng.integers(1, m + 1))
    assert row_alpha(stats, draws, k) == brute_row_alpha(stats, draws, k)


def test_row_alpha_k_too_large():
    with pytest.raises(InvalidInput):
        row_alpha(np.ones(2), np.ones((3, 2)), 3)


def test_bh_example():
    res = bh_select([0.001, 0.01, 0.03, 0.5], 0.1)
    assert res.selected == [0, 1, 2]
    assert res.j_max == 3
    assert res.bh_threshold == 0.03
    assert bh_select([0.9, 0.8], 0.1).selected == []


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=30), st.floats(0.01, 0.5))
def test_bh_matches_brute_force(alpha, q):
    assert bh_select(alpha, q).selected == brute_bh(alpha, q)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=30), st.floats(0.01, 0.4), st.floats(0.0, 0.5))
def test_bh_monotone_in_q(alpha, q, extra):
    small = set(bh_select(alpha, q).selected)
    large = set(bh_select(alpha, min(q + extra, 0.99)).selected)
    assert small <= large


def _shared_instance(rng, d, B):
    edges = [(j, k) for j in range(d) for k in range(j + 1, d)]
    draws = np.abs(rng.standard_normal((B, len(edges))))
    ens = BootstrapEnsemble(draws, edges)
    theta = np.zeros((d, d))
    for (j, k) in edges:
        theta[j, k] = theta[k, j] = rng.choice([0.0, rng.uniform(0, 0.3)])
    return theta, EnsembleRows(ens, d)


@pytest.mark.parametrize("seed", range(10))
def test_skipdown_equivalence(seed):
    rng = np.random.default_rng(seed)
    d, n, B = 8, 100, 200
    theta, prov = _shared_instance(rng, d, B)
    for j in range(d):
        a = node_alpha(theta, prov, j, 3, n)
        for level in (0.05, 0.1, 0.2, 0.5):
            assert skipdown_test(theta, prov, j, 3, level, n) == (a <= level)


def test_startrek_threads_and_null_rows():
    rng = np.random.default_rng(3)
    theta, prov = _shared_instance(rng, 7, 100)
    cfg = HypothesisConfig(2, 0.2)
    r1 = startrek(theta, prov, cfg, 50, threads=1)
    r3 = startrek(theta, prov, cfg, 50, threads=3)
    np.testing.assert_array_equal(r1.alpha, r3.alpha)
    assert r1.selected == r3.selected
    # an all-zero estimate never rejects
    zero = startrek(np.zeros((7, 7)), prov, cfg, 50)
    assert zero.selected == []
    assert np.all(zero.alpha == 1.0)
