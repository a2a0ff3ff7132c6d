"""Rank-based tests used to compare landing conditions.

Independent groups (foot structures) get a Kruskal-Wallis omnibus test
followed by Steel-Dwass all-pairs comparisons. Related samples (ankle or
toe angles measured on the same trial slots) get a Friedman omnibus test
followed by pairwise Wilcoxon signed-rank tests at a Bonferroni-adjusted
level. Every test can also be evaluated by Monte-Carlo permutation, which
serves as the reference for the asymptotic approximations.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.stats import chi2, norm, rankdata

from .errors import (
    AllZeroDifferences,
    IncompleteBlocks,
    InvalidAlpha,
    LengthMismatch,
    NonFiniteInput,
    TooFewGroups,
    ValidationError,
)

TESTS = ("kruskal_wallis", "steel_dwass_pair", "friedman", "wilcoxon_signed_rank")
EXACT_FRIEDMAN_LIMIT = 10 ** 6
EXACT_WILCOXON_MAX_N = 25
MIN_DRAWS = 1000
_BATCH = 10000


@dataclass(frozen=True)
class StatResult:
    test: str
    statistic: float
    p: float
    alpha: float
    method: str
    mc_se: float | None = None
    n_draws: int | None = None

    @property
    def significant(self) -> bool:
        return self.p < self.alpha


@dataclass
class PairwiseTable:
    """One :class:`StatResult` per unordered pair of group labels, in input order."""

    labels: list
    results: dict = field(default_factory=dict)

    def __getitem__(self, pair):
        a, b = pair
        if (a, b) in self.results:
            return self.results[(a, b)]
        return self.results[(b, a)]

    def __len__(self):
        return len(self.results)

    def __iter__(self):
        return iter(self.results.items())

    def pairs(self):
        return list(self.results)


def _check_alpha(alpha):
    if not (0 < alpha <= 1):
        raise InvalidAlpha(f"alpha must lie in (0, 1], got {alpha}", "alpha")


def bonferroni(alpha: float, m: int) -> float:
    """Per-comparison level for ``m`` comparisons at familywise level ``alpha``."""
    _check_alpha(alpha)
    if int(m) != m or m < 1:
        raise ValidationError("number of comparisons must be a positive integer", "m")
    return alpha / m


def truncate_alpha(alpha: float, decimals: int = 3) -> float:
    """Truncate (not round) for display: 0.05/6 -> 0.008."""
    scale = 10 ** decimals
    return math.floor(alpha * scale + 1e-9) / scale


def format_p(p: float, floor: float = 0.001) -> str:
    """Two significant figures, or ``< 0.0010`` below ``floor``."""
    if p < floor:
        return f"< {floor:.4f}"
    decimals = max(1, 1 - math.floor(math.log10(p)))
    return f"{p:.{decimals}f}"


# ---------------------------------------------------------------------------
# Ranks
# ---------------------------------------------------------------------------

def rank_with_ties(values) -> tuple[np.ndarray, np.ndarray]:
    """Average ranks (1-based) and the size of every tie group.

    >>> rank_with_ties([5, 5, 9])[0]
    array([1.5, 1.5, 3. ])
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValidationError("cannot rank an empty sample", "values")
    if not np.isfinite(x).all():
        raise NonFiniteInput("values must be finite", "values")
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    bounds = np.concatenate(([0], np.flatnonzero(np.diff(xs) != 0) + 1, [len(xs)]))
    sizes = np.diff(bounds)
    avg = (bounds[:-1] + 1 + bounds[1:]) / 2.0
    ranks = np.empty(len(x))
    ranks[order] = np.repeat(avg, sizes)
    return ranks, sizes


def _tie_term(sizes) -> float:
    s = np.asarray(sizes, dtype=float)
    return float(np.sum(s ** 3 - s))


# ---------------------------------------------------------------------------
# Monte-Carlo machinery
# ---------------------------------------------------------------------------

def _mc_p(observed, draws_fn, n_draws, seed):
    """``(1 + #{T* >= T_obs}) / (n + 1)`` with a relative float guard."""
    if n_draws < MIN_DRAWS:
        raise ValidationError(f"n_draws must be >= {MIN_DRAWS}", "n_draws")
    rng = np.random.default_rng(seed)
    tol = 1e-9 * max(1.0, abs(observed))
    hits = 0
    done = 0
    while done < n_draws:
        b = min(_BATCH, n_draws - done)
        stats = draws_fn(rng, b)
        hits += int(np.count_nonzero(stats >= observed - tol))
        done += b
    p = (1 + hits) / (n_draws + 1)
    return p, math.sqrt(p * (1 - p) / n_draws)


def _degenerate(test, alpha, method, n_draws):
    """All observations tied: every permutation reproduces the statistic."""
    if method == "monte_carlo":
        return StatResult(test, 0.0, 1.0, alpha, method, 0.0, n_draws)
    return StatResult(test, 0.0, 1.0, alpha, method)


def _perm_rows(rng, b, n):
    return np.argsort(rng.random((b, n)), axis=1)


# ---------------------------------------------------------------------------
# Kruskal-Wallis
# ---------------------------------------------------------------------------

def _groups(groups):
    gs = [np.asarray(g, dtype=float) for g in groups]
    if len(gs) < 2:
        raise TooFewGroups("need at least two groups", "groups")
    for i, g in enumerate(gs):
        if g.ndim != 1 or len(g) < 2:
            raise ValidationError(f"group {i} needs at least two observations", "groups")
        if not np.isfinite(g).all():
            raise NonFiniteInput(f"group {i} has non-finite values", "groups")
    return gs


def _kw_from_ranks(rank_rows, sizes, tie_term):
    n = rank_rows.shape[-1]
    edges = np.concatenate(([0], np.cumsum(sizes)))
    h = np.zeros(rank_rows.shape[:-1])
    for a, b, m in zip(edges[:-1], edges[1:], sizes):
        h = h + rank_rows[..., a:b].sum(axis=-1) ** 2 / m
    h = 12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)
    return h / (1.0 - tie_term / (n ** 3 - n))


def kruskal_wallis(groups, alpha: float = 0.05, method: str = "large_sample",
                   n_draws: int = 100000, seed: int = 0) -> StatResult:
    """Tie-corrected H statistic; chi-square tail with ``len(groups) - 1`` df.

    ``method="monte_carlo"`` permutes group labels instead. All-identical
    data give H = 0, p = 1.
    """
    _check_alpha(alpha)
    gs = _groups(groups)
    pooled = np.concatenate(gs)
    sizes = [len(g) for g in gs]
    ranks, ties = rank_with_ties(pooled)
    n = len(pooled)
    tie_term = _tie_term(ties)
    if tie_term == n ** 3 - n:
        return _degenerate("kruskal_wallis", alpha, method, n_draws)
    h = float(_kw_from_ranks(ranks, sizes, tie_term))
    if method == "large_sample":
        p = float(chi2.sf(h, len(gs) - 1))
        return StatResult("kruskal_wallis", h, min(1.0, p), alpha, method)
    if method == "monte_carlo":
        def draws(rng, b):
            return _kw_from_ranks(ranks[_perm_rows(rng, b, n)], sizes, tie_term)
        p, se = _mc_p(h, draws, n_draws, seed)
        return StatResult("kruskal_wallis", h, p, alpha, method, se, n_draws)
    raise ValidationError(f"unknown method {method!r}", "method")


# ---------------------------------------------------------------------------
# Studentized range (infinite df)
# ---------------------------------------------------------------------------

def studentized_range_sf(q: float, k: int) -> float:
    """Upper tail of the range of ``k`` iid standard normals.

    ``P(Q > q) = k * int phi(z) [Phi(z)^(k-1) - (Phi(z) - Phi(z-q))^(k-1)] dz``,
    integrated by adaptive quadrature to an absolute tolerance of 1e-10.
    """
    if k < 2:
        raise ValidationError("k must be >= 2", "k")
    if q <= 0:
        return 1.0

    def integrand(z):
        big = norm.cdf(z)
        return norm.pdf(z) * (big ** (k - 1) - (big - norm.cdf(z - q)) ** (k - 1))

    val, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-10, epsrel=1e-10, limit=200)
    # split at the bulk of the mass for robustness with large q
    if val < 1e-6:
        parts = [(-np.inf, -8.0), (-8.0, q / 2), (q / 2, q + 8.0), (q + 8.0, np.inf)]
        val = sum(integrate.quad(integrand, a, b, epsabs=1e-13, epsrel=1e-10, limit=200)[0]
                  for a, b in parts)
    return float(min(1.0, max(0.0, k * val)))


# ---------------------------------------------------------------------------
# Steel-Dwass
# ---------------------------------------------------------------------------

def _pair_t(a, b):
    """Standardised rank sum of ``a`` in the joint ranking of ``a`` and ``b``."""
    ranks, ties = rank_with_ties(np.concatenate([a, b]))
    na, nb = len(a), len(b)
    n = na + nb
    var = na * nb / (n * (n - 1)) * (np.sum(ranks ** 2) - n * (n + 1) ** 2 / 4.0)
    if var <= 0:
        return 0.0
    return float((ranks[:na].sum() - na * (n + 1) / 2.0) / math.sqrt(var))


def _pair_t_batch(x, na):
    """Vectorised :func:`_pair_t` over rows of ``x`` (first ``na`` columns are ``a``)."""
    r = rankdata(x, axis=1)
    n = x.shape[1]
    nb = n - na
    var = na * nb / (n * (n - 1)) * ((r ** 2).sum(axis=1) - n * (n + 1) ** 2 / 4.0)
    num = r[:, :na].sum(axis=1) - na * (n + 1) / 2.0
    out = np.zeros(len(x))
    ok = var > 0
    out[ok] = num[ok] / np.sqrt(var[ok])
    return out


def steel_dwass(groups, labels=None, alpha: float = 0.05, method: str = "large_sample",
                n_draws: int = 100000, seed: int = 0) -> PairwiseTable:
    """All-pairs comparisons controlling the familywise error.

    Each pair is ranked on its own; the standardised rank sum ``t`` is
    referred to the studentized range of ``k`` groups at ``sqrt(2)|t|``.
    The Monte-Carlo variant permutes the pooled labels and compares each
    ``|t|`` with the permutation distribution of ``max |t|`` over pairs.
    """
    _check_alpha(alpha)
    gs = _groups(groups)
    labels = list(labels) if labels is not None else [str(i) for i in range(len(gs))]
    if len(labels) != len(gs):
        raise ValidationError("one label per group is required", "labels")
    k = len(gs)
    pairs = list(itertools.combinations(range(k), 2))
    t_obs = {pair: _pair_t(gs[pair[0]], gs[pair[1]]) for pair in pairs}
    table = PairwiseTable(labels)

    if method == "large_sample":
        for (i, j), t in t_obs.items():
            p = studentized_range_sf(math.sqrt(2.0) * abs(t), k)
            table.results[(labels[i], labels[j])] = StatResult(
                "steel_dwass_pair", t, p, alpha, method)
        return table
    if method != "monte_carlo":
        raise ValidationError(f"unknown method {method!r}", "method")
    if n_draws < MIN_DRAWS:
        raise ValidationError(f"n_draws must be >= {MIN_DRAWS}", "n_draws")

    pooled = np.concatenate(gs)
    edges = np.concatenate(([0], np.cumsum([len(g) for g in gs])))
    rng = np.random.default_rng(seed)
    obs = np.array([abs(t_obs[p]) for p in pairs])
    hits = np.zeros(len(pairs), dtype=np.int64)
    done = 0
    while done < n_draws:
        b = min(_BATCH, n_draws - done)
        perm = pooled[_perm_rows(rng, b, len(pooled))]
        mx = np.zeros(b)
        for i, j in pairs:
            x = np.concatenate([perm[:, edges[i]:edges[i + 1]], perm[:, edges[j]:edges[j + 1]]], axis=1)
            mx = np.maximum(mx, np.abs(_pair_t_batch(x, edges[i + 1] - edges[i])))
        hits += (mx[:, None] >= obs[None, :] - 1e-9 * np.maximum(1.0, obs)[None, :]).sum(axis=0)
        done += b
    for idx, (i, j) in enumerate(pairs):
        p = (1 + hits[idx]) / (n_draws + 1)
        table.results[(labels[i], labels[j])] = StatResult(
            "steel_dwass_pair", t_obs[(i, j)], p, alpha, method,
            math.sqrt(p * (1 - p) / n_draws), n_draws)
    return table


# ---------------------------------------------------------------------------
# Friedman
# ---------------------------------------------------------------------------

def _blocks(blocks):
    x = np.asarray(blocks, dtype=float)
    if x.ndim != 2:
        raise IncompleteBlocks("blocks must be a complete n_blocks x k matrix", "blocks")
    if not np.isfinite(x).all():
        raise IncompleteBlocks("blocks contain missing or non-finite cells", "blocks")
    n, k = x.shape
    if n < 2 or k < 2:
        raise IncompleteBlocks("need at least 2 blocks and 2 treatments", "blocks")
    return x


def _friedman_from_sums(sum_sq, n, k, correction):
    return (12.0 / (n * k * (k + 1)) * sum_sq - 3.0 * n * (k + 1)) / correction


def friedman_exact_p(rank_matrix) -> float:
    """Exact permutation p-value of the column rank-sum statistic.

    Each block's ranks are permuted independently over all ``k!`` orders
    (with multiplicity when ranks tie). Dynamic programming over blocks on
    the vector of doubled column sums keeps every comparison in integers.
    """
    r2 = np.rint(2 * np.asarray(rank_matrix)).astype(int)
    n, k = r2.shape
    observed = int(np.sum(r2.sum(axis=0) ** 2))
    states = {tuple([0] * k): 1}
    for row in r2:
        perms = list(itertools.permutations(row.tolist()))
        nxt = defaultdict(int)
        for state, count in states.items():
            for perm in perms:
                nxt[tuple(s + v for s, v in zip(state, perm))] += count
        states = nxt
    total = math.factorial(k) ** n
    hits = sum(count for state, count in states.items() if sum(s * s for s in state) >= observed)
    return hits / total


def friedman(blocks, alpha: float = 0.05, method: str = "auto",
             n_draws: int = 100000, seed: int = 0) -> StatResult:
    """Friedman chi-square for an ``n_blocks x k`` matrix.

    ``method="auto"`` enumerates exactly when ``(k!)**n <= 1e6`` and uses
    the chi-square tail with ``k - 1`` df otherwise.
    """
    _check_alpha(alpha)
    x = _blocks(blocks)
    n, k = x.shape
    ranks = np.empty_like(x)
    tie = 0.0
    for i, row in enumerate(x):
        ranks[i], sizes = rank_with_ties(row)
        tie += _tie_term(sizes)
    correction = 1.0 - tie / (n * (k ** 3 - k))
    if correction <= 0:
        return _degenerate("friedman", alpha, "exact" if method != "monte_carlo" else method, n_draws)
    stat = float(_friedman_from_sums(np.sum(ranks.sum(axis=0) ** 2), n, k, correction))
    if method == "auto":
        method = "exact" if math.factorial(k) ** n <= EXACT_FRIEDMAN_LIMIT else "large_sample"
    if method == "exact":
        return StatResult("friedman", stat, friedman_exact_p(ranks), alpha, method)
    if method == "large_sample":
        return StatResult("friedman", stat, float(min(1.0, chi2.sf(stat, k - 1))), alpha, method)
    if method == "monte_carlo":
        def draws(rng, b):
            idx = np.argsort(rng.random((b, n, k)), axis=2)
            permuted = np.take_along_axis(np.broadcast_to(ranks, (b, n, k)), idx, axis=2)
            return _friedman_from_sums((permuted.sum(axis=1) ** 2).sum(axis=1), n, k, correction)
        p, se = _mc_p(stat, draws, n_draws, seed)
        return StatResult("friedman", stat, p, alpha, method, se, n_draws)
    raise ValidationError(f"unknown method {method!r}", "method")


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank
# ---------------------------------------------------------------------------

def signed_rank_counts(n: int) -> np.ndarray:
    """``counts[w]`` = number of subsets of {1..n} whose sum is ``w``."""
    counts = np.zeros(n * (n + 1) // 2 + 1, dtype=object)
    counts[0] = 1
    for r in range(1, n + 1):
        counts[r:] = counts[r:] + counts[:-r].copy()
    return counts


def _signed_rank_exact_p(w_plus: int, n: int) -> float:
    counts = signed_rank_counts(n)
    total = 2 ** n
    lower = sum(counts[: w_plus + 1])
    upper = sum(counts[w_plus:])
    return min(1.0, 2 * min(lower, upper) / total)


def wilcoxon_signed_rank(x, y, alpha: float = 0.05, method: str = "auto",
                         n_draws: int = 100000, seed: int = 0) -> StatResult:
    """Two-sided paired test on ``x - y``.

    Zero differences are dropped. Without ties and with at most 25 nonzero
    differences the exact null distribution is used; otherwise the normal
    approximation with tie-corrected variance and continuity correction.
    The reported statistic is ``min(W+, W-)``.
    """
    _check_alpha(alpha)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch("paired samples must have equal length")
    d = x - y
    if not np.isfinite(d).all():
        raise NonFiniteInput("paired samples must be finite")
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise AllZeroDifferences("every paired difference is zero")
    ranks, ties = rank_with_ties(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    total = n * (n + 1) / 2.0
    stat = min(w_plus, total - w_plus)
    has_ties = bool(np.any(ties > 1))
    if method == "auto":
        method = "exact" if (not has_ties and n <= EXACT_WILCOXON_MAX_N) else "large_sample"
    if method == "exact":
        if has_ties:
            raise ValidationError("exact method requires untied |differences|", "method")
        return StatResult("wilcoxon_signed_rank", stat,
                          _signed_rank_exact_p(int(round(w_plus)), n), alpha, method)
    mean = total / 2.0
    if method == "large_sample":
        var = n * (n + 1) * (2 * n + 1) / 24.0 - _tie_term(ties) / 48.0
        z = max(abs(w_plus - mean) - 0.5, 0.0) / math.sqrt(var)
        return StatResult("wilcoxon_signed_rank", stat, float(min(1.0, 2 * norm.sf(z))), alpha, method)
    if method == "monte_carlo":
        observed = abs(w_plus - mean)

        def draws(rng, b):
            signs = rng.random((b, n)) < 0.5
            return np.abs((signs * ranks).sum(axis=1) - mean)
        p, se = _mc_p(observed, draws, n_draws, seed)
        return StatResult("wilcoxon_signed_rank", stat, p, alpha, method, se, n_draws)
    raise ValidationError(f"unknown method {method!r}", "method")


# ---------------------------------------------------------------------------
# Unified oracle entry point
# ---------------------------------------------------------------------------

def permutation_oracle(test: str, data, n_draws: int = 100000, seed: int = 0,
                       alpha: float = 0.05):
    """Monte-Carlo permutation version of ``test``.

    ``data`` is a list of groups for ``kruskal_wallis`` and ``steel_dwass``
    (which returns a :class:`PairwiseTable`), a block matrix for
    ``friedman`` and an ``(x, y)`` pair for ``wilcoxon_signed_rank``.
    Results are deterministic for a fixed ``seed``.
    """
    if n_draws < MIN_DRAWS:
        raise ValidationError(f"n_draws must be >= {MIN_DRAWS}", "n_draws")
    kw = dict(alpha=alpha, method="monte_carlo", n_draws=n_draws, seed=seed)
    if test == "kruskal_wallis":
        return kruskal_wallis(data, **kw)
    if test in ("steel_dwass", "steel_dwass_pair"):
        return steel_dwass(data, **kw)
    if test == "friedman":
        return friedman(data, **kw)
    if test == "wilcoxon_signed_rank":
        x, y = data
        return wilcoxon_signed_rank(x, y, **kw)
    raise ValidationError(f"unknown test {test!r}", "test")
