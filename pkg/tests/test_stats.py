import itertools
import math

import numpy as np
import pytest
import scipy.stats as ss
from hypothesis import given, settings, strategies as st

from impactid import stats
from impactid.errors import AllZeroDifferences, IncompleteBlocks, InvalidAlpha, TooFewGroups


# --- enumeration oracles (independent of the package code) -----------------

def brute_signed_rank_p(d):
    d = np.asarray(d, dtype=float)
    n = len(d)
    ranks = ss.rankdata(np.abs(d))
    center = n * (n + 1) / 4
    obs = abs(ranks[d > 0].sum() - center)
    hits = 0
    for signs in itertools.product((0, 1), repeat=n):
        if abs(np.dot(signs, ranks) - center) >= obs - 1e-9:
            hits += 1
    return hits / 2 ** n


def brute_kw_p(groups):
    pooled = np.concatenate(groups)
    sizes = [len(g) for g in groups]
    h_obs = ss.kruskal(*groups).statistic
    hits = total = 0
    n = len(pooled)
    for first in itertools.combinations(range(n), sizes[0]):
        rest = [i for i in range(n) if i not in first]
        for second in itertools.combinations(rest, sizes[1]):
            third = [i for i in rest if i not in second]
            h = ss.kruskal(pooled[list(first)], pooled[list(second)], pooled[third]).statistic
            hits += h >= h_obs - 1e-9
            total += 1
    return hits / total, total


def brute_friedman_p(x):
    ranks = np.apply_along_axis(ss.rankdata, 1, x)
    obs = np.sum(ranks.sum(axis=0) ** 2)
    perms = [list(itertools.permutations(r)) for r in ranks]
    hits = total = 0
    for combo in itertools.product(*perms):
        s = np.sum(np.sum(combo, axis=0) ** 2)
        hits += s >= obs - 1e-9
        total += 1
    return hits / total


# --- helpers ---------------------------------------------------------------

def test_rank_with_ties_examples():
    assert stats.rank_with_ties([10, 20, 30])[0].tolist() == [1, 2, 3]
    assert stats.rank_with_ties([5, 5, 9])[0].tolist() == [1.5, 1.5, 3]
    assert stats.rank_with_ties([7, 7, 7, 7])[0].tolist() == [2.5] * 4


@given(st.lists(st.integers(-5, 5), min_size=1, max_size=40))
def test_rank_with_ties_matches_scipy(values):
    np.testing.assert_array_equal(stats.rank_with_ties(values)[0], ss.rankdata(values))


def test_bonferroni():
    assert stats.bonferroni(0.05, 6) == pytest.approx(0.05 / 6)
    assert stats.truncate_alpha(stats.bonferroni(0.05, 6)) == 0.008
    assert stats.bonferroni(0.05, 1) == 0.05
    assert stats.bonferroni(0.05, 3) == pytest.approx(0.016667, abs=1e-6)
    with pytest.raises(InvalidAlpha):
        stats.bonferroni(0.0, 3)


def test_format_p():
    assert stats.format_p(2 / 2 ** 10) == "0.0020"
    assert stats.format_p(0.0004) == "< 0.0010"
    assert stats.format_p(0.9) == "0.90"
    assert stats.format_p(0.17) == "0.17"


# --- Kruskal-Wallis ----------------------------------------------------------

def test_kw_identical_groups():
    r = stats.kruskal_wallis([[1, 2, 3]] * 3)
    assert (r.statistic, r.p) == (0.0, 1.0)
    assert not r.significant


def test_kw_separated_hand_value():
    assert stats.kruskal_wallis([[1, 2, 3], [4, 5, 6], [7, 8, 9]]).statistic == pytest.approx(7.2)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(st.integers(0, 6), min_size=2, max_size=8), min_size=2, max_size=4))
def test_kw_matches_scipy(groups):
    if len(set(itertools.chain(*groups))) < 2:
        return
    ours = stats.kruskal_wallis(groups)
    ref = ss.kruskal(*groups)
    assert ours.statistic == pytest.approx(ref.statistic, rel=1e-10)
    assert ours.p == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-15)


def test_kw_permutation_oracle_against_full_enumeration():
    groups = [np.array([1., 2, 3]), np.array([4., 5, 6]), np.array([7., 8, 9])]
    exact, total = brute_kw_p(groups)
    assert total == 1680
    mc = stats.permutation_oracle("kruskal_wallis", groups, n_draws=100000, seed=7)
    assert abs(mc.p - exact) <= 3 * max(mc.mc_se, math.sqrt(exact * (1 - exact) / 100000))


def test_kw_requires_two_groups():
    with pytest.raises(TooFewGroups):
        stats.kruskal_wallis([[1, 2, 3]])


# --- Steel-Dwass -------------------------------------------------------------

def test_studentized_range_matches_scipy():
    for k in (2, 3, 4):
        for q in (0.5, 1.5, 3.0, 4.5):
            ref = ss.studentized_range.sf(q, k, 1e6)
            assert stats.studentized_range_sf(q, k) == pytest.approx(ref, rel=1e-4, abs=1e-8)


def test_studentized_range_two_groups_is_normal_tail():
    for q in (0.3, 1.0, 2.5):
        assert stats.studentized_range_sf(q, 2) == pytest.approx(2 * ss.norm.sf(q / math.sqrt(2)), rel=1e-9)


def test_steel_dwass_identical_pair():
    rng = np.random.default_rng(0)
    a = rng.normal(size=10)
    table = stats.steel_dwass([a, a.copy(), a + 5], ["x", "y", "z"])
    assert abs(table["x", "y"].statistic) < 1e-12
    assert table["x", "y"].p == pytest.approx(1.0, abs=1e-8)
    assert len(table) == 3


def test_steel_dwass_separated_pair():
    a = np.arange(10.0)
    table = stats.steel_dwass([a, a + 100, a + 50], ["a", "b", "c"])
    assert table["a", "b"].p < 0.001
    assert table["b", "a"] is table["a", "b"]


def test_steel_dwass_converges_to_permutation_for_large_groups():
    rng = np.random.default_rng(11)
    groups = [rng.normal(0, 1, 200), rng.normal(0.15, 1, 200), rng.normal(0.3, 1, 200)]
    approx = stats.steel_dwass(groups)
    mc = stats.permutation_oracle("steel_dwass", groups, n_draws=20000, seed=2)
    for pair, res in approx:
        assert abs(res.p - mc[pair].p) < 0.01


def test_steel_dwass_label_symmetry():
    rng = np.random.default_rng(3)
    g = [rng.normal(i, 1, 8) for i in range(3)]
    t1 = stats.steel_dwass(g, ["a", "b", "c"])
    t2 = stats.steel_dwass([g[2], g[0], g[1]], ["c", "a", "b"])
    for pair, res in t1:
        assert t2[pair].p == pytest.approx(res.p, rel=1e-12)


# --- Friedman ----------------------------------------------------------------

def test_friedman_identical_rankings():
    x = np.tile([1.0, 2.0, 3.0], (10, 1))
    r = stats.friedman(x)
    assert r.statistic == pytest.approx(20.0)
    assert r.p < 0.001


def test_friedman_tied_treatments():
    r = stats.friedman(np.tile([4.0, 4.0, 4.0], (6, 1)))
    assert (r.statistic, r.p) == (0.0, 1.0)


def test_friedman_small_exact_vs_chi_square():
    x = np.array([[1, 2, 3], [2, 1, 3], [1, 3, 2], [1, 2, 3]], dtype=float)
    exact = stats.friedman(x, method="exact")
    approx = stats.friedman(x, method="large_sample")
    assert exact.p == pytest.approx(brute_friedman_p(x), abs=1e-15)
    assert abs(exact.p - approx.p) <= 0.05


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 4), st.integers(2, 4), st.integers(0, 10 ** 6))
def test_friedman_exact_matches_enumeration(k, n, seed):
    if math.factorial(k) ** n > 20000:
        return
    x = np.random.default_rng(seed).integers(0, 4, (n, k)).astype(float)
    exact = stats.friedman(x, method="exact")
    if exact.method == "exact" and exact.statistic > 0:
        assert exact.p == pytest.approx(brute_friedman_p(x), abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(5, 12), st.integers(3, 5), st.integers(0, 10 ** 6))
def test_friedman_chi_square_matches_scipy(n, k, seed):
    x = np.random.default_rng(seed).normal(size=(n, k))
    ours = stats.friedman(x, method="large_sample")
    ref = ss.friedmanchisquare(*x.T)
    assert ours.statistic == pytest.approx(ref.statistic, rel=1e-10)
    assert ours.p == pytest.approx(ref.pvalue, rel=1e-9)


def test_friedman_incomplete():
    with pytest.raises(IncompleteBlocks):
        stats.friedman([[1.0, np.nan], [2.0, 3.0]])


# --- Wilcoxon signed-rank ----------------------------------------------------

def test_wilcoxon_floor():
    x = np.arange(1.0, 11.0)
    r = stats.wilcoxon_signed_rank(x + np.arange(1, 11) * 0.1 + 1, x)
    assert r.method == "exact"
    assert r.p == pytest.approx(2 / 2 ** 10, abs=1e-15)
    assert stats.format_p(r.p) == "0.0020"


def test_wilcoxon_symmetric_differences():
    d = np.array([1.0, -1.5, 2.0, -2.5, 3.0, -3.5, 1.5, -1.0, 2.5, -2.0, 3.5, -3.0])
    r = stats.wilcoxon_signed_rank(d, np.zeros_like(d))
    assert r.p == 1.0


def test_wilcoxon_all_zero():
    with pytest.raises(AllZeroDifferences):
        stats.wilcoxon_signed_rank([1, 2, 3], [1, 2, 3])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(0, 10 ** 6))
def test_wilcoxon_exact_matches_enumeration(n, seed):
    rng = np.random.default_rng(seed)
    mags = rng.permutation(np.arange(1, n + 1)) + rng.uniform(0, 0.5)
    d = mags * rng.choice([-1, 1], n)
    r = stats.wilcoxon_signed_rank(d, np.zeros(n), method="exact")
    assert abs(r.p - brute_signed_rank_p(d)) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(5, 20), st.integers(0, 10 ** 6))
def test_wilcoxon_exact_matches_scipy(n, seed):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=n)
    ours = stats.wilcoxon_signed_rank(d, np.zeros(n))
    ref = ss.wilcoxon(d, method="exact")
    assert ours.p == pytest.approx(ref.pvalue, rel=1e-12)
    assert ours.statistic == ref.statistic


# --- shared properties -------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_rank_invariance(seed):
    rng = np.random.default_rng(seed)
    g = [rng.normal(size=6) for _ in range(3)]
    f = [np.exp(3 * x) + 2 for x in g]
    assert stats.kruskal_wallis(f).p == pytest.approx(stats.kruskal_wallis(g).p, rel=1e-12)
    m = np.column_stack(g)
    assert stats.friedman(np.exp(m)).p == pytest.approx(stats.friedman(m).p, rel=1e-12)
    a, b = stats.steel_dwass(g), stats.steel_dwass(f)
    for pair, res in a:
        assert b[pair].p == pytest.approx(res.p, rel=1e-12)
    # signed ranks depend on |x - y|, so only increasing affine maps preserve them
    assert stats.wilcoxon_signed_rank(3 * g[0] + 1, 3 * g[1] + 1).p == \
        stats.wilcoxon_signed_rank(g[0], g[1]).p


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6), st.permutations(range(3)))
def test_relabeling_invariance(seed, order):
    rng = np.random.default_rng(seed)
    g = [rng.normal(size=7) for _ in range(3)]
    assert stats.kruskal_wallis([g[i] for i in order]).p == pytest.approx(stats.kruskal_wallis(g).p, rel=1e-12)
    m = np.column_stack(g)
    assert stats.friedman(m[:, list(order)]).p == pytest.approx(stats.friedman(m).p, rel=1e-12)


@given(st.floats(0, 1), st.floats(1e-6, 1))
def test_significance_rule(p, alpha):
    r = stats.StatResult("x", 0.0, p, alpha, "exact")
    assert r.significant == (p < alpha)


# --- permutation oracle ------------------------------------------------------

@pytest.mark.parametrize("test, data", [
    ("kruskal_wallis", [[1.0, 2, 3, 4]] * 3),
    ("friedman", np.tile([[1.0], [2.0], [3.0], [5.0]], (1, 3))),
])
def test_oracle_identical_groups(test, data):
    r = stats.permutation_oracle(test, data, n_draws=5000, seed=1)
    assert r.p >= 1 - 3 * max(r.mc_se, 1 / 5000)


def test_oracle_deterministic():
    rng = np.random.default_rng(5)
    g = [rng.normal(size=6) for _ in range(3)]
    a = stats.permutation_oracle("kruskal_wallis", g, n_draws=3000, seed=9)
    b = stats.permutation_oracle("kruskal_wallis", g, n_draws=3000, seed=9)
    assert a == b


def test_oracle_wilcoxon_near_exact():
    rng = np.random.default_rng(8)
    x, y = rng.normal(size=10), rng.normal(size=10)
    exact = stats.wilcoxon_signed_rank(x, y)
    mc = stats.permutation_oracle("wilcoxon_signed_rank", (x, y), n_draws=100000, seed=3)
    assert abs(mc.p - exact.p) <= 3 * math.sqrt(exact.p * (1 - exact.p) / 100000) + 1e-5
