# Rank tests for comparing landing conditions, and how far their
# large-sample p-values sit from a Monte-Carlo permutation reference.
import numpy as np

from impactid import stats

rng = np.random.default_rng(1)

# Three independent foot structures, ten trials each.
flat, rigid, soft = (rng.normal(loc, 0.05, 10) for loc in (0.20, 0.25, 0.32))
kw = stats.kruskal_wallis([flat, rigid, soft])
print(f"Kruskal-Wallis H={kw.statistic:.2f}  p={stats.format_p(kw.p)}")
sd = stats.steel_dwass([flat, rigid, soft], labels=["flat", "rigid", "soft"])
for pair in sd.pairs():
    r = sd[pair]
    print(f"  Steel-Dwass {pair[0]}-{pair[1]}: t={r.statistic:.2f}  p={stats.format_p(r.p)}")

# Four ankle angles measured on the same ten trial slots.
base = rng.normal(0.25, 0.05, (10, 1))
blocks = base + np.array([0.0, 0.01, 0.04, 0.08]) + rng.normal(0, 0.01, (10, 4))
fr = stats.friedman(blocks)
print(f"Friedman chi2={fr.statistic:.2f}  p {stats.format_p(fr.p)} ({fr.method})")
alpha = stats.bonferroni(0.05, 6)
print(f"pairwise level 0.05/6 = {alpha:.5f}, reported as {stats.truncate_alpha(alpha)}")
for i in range(4):
    for j in range(i + 1, 4):
        w = stats.wilcoxon_signed_rank(blocks[:, i], blocks[:, j], alpha=alpha)
        star = "*" if w.significant else ""
        print(f"  Wilcoxon {i}-{j}: p={stats.format_p(w.p)}{star}")

# Ten fully separated pairs give the smallest exact two-sided p: 2 / 2**10.
w = stats.wilcoxon_signed_rank(np.arange(10) * 1.5 + 5.0, np.arange(10.0))
print(f"fully separated pairs: p={w.p:.6f} -> {stats.format_p(w.p)}")

# Large-sample approximations against 1e5 permutation draws.
small = [rng.normal(size=5), rng.normal(size=6) + 0.8, rng.normal(size=5) + 1.2]
approx = stats.kruskal_wallis(small)
mc = stats.permutation_oracle("kruskal_wallis", small, 100000, seed=0)
print(f"KW on n=5,6,5: chi2 p={approx.p:.4f}  permutation p={mc.p:.4f} +/- {mc.mc_se:.4f}")
