"""Batch pipeline pieces behind the command line: per-trial identification
tables, statistics batteries over condition groups and plot-ready CSVs.

All writers produce deterministic bytes for identical inputs.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import ident, signal, smd, stats
from .errors import (
    AllZeroDifferences,
    InsufficientData,
    MissingResults,
    UnknownGrouping,
)
from .signal import ConditionKey

log = logging.getLogger(__name__)

IDENT_COLUMNS = ["file", "foot_type", "theta_a_deg", "theta_t_deg", "drop_height_mm",
                 "trial_index", "k", "c", "zeta", "error", "n_k", "n_c", "peak_force_N"]
METRICS = ("peak_force_N", "k", "c", "zeta")
FOOT_ORDER = {name: i for i, name in enumerate(signal.FOOT_TYPES)}

GROUPINGS = {
    # grouping: (factor column, context columns, paired?)
    "skeleton": ("foot_type", ("theta_a_deg", "theta_t_deg", "drop_height_mm"), False),
    "ankle": ("theta_a_deg", ("foot_type", "theta_t_deg", "drop_height_mm"), True),
    "toe": ("theta_t_deg", ("foot_type", "theta_a_deg", "drop_height_mm"), True),
}


def sig6(x) -> str:
    return f"{float(x):.6g}"


def num(x) -> str:
    """Compact representation of a condition value (``-30``, ``12.5``)."""
    return f"{float(x):g}"


# ---------------------------------------------------------------------------
# Identification batch
# ---------------------------------------------------------------------------

@dataclass
class BatchSettings:
    M: float
    g: float = smd.G_DEFAULT
    dt_force: float = smd.DT_FORCE_DEFAULT
    grid: ident.GridSpec = ident.GridSpec()
    config: ident.IdentConfig = ident.IdentConfig()
    jobs: int = 1


def identify_entry(entry: signal.ManifestEntry, settings: BatchSettings) -> ident.IdentResult:
    trial = signal.load_entry(entry)
    window = None
    if entry.baseline_window_s is not None:
        window = signal.baseline_window_samples(entry.baseline_window_s, trial.force.dt)
    trial = signal.apply_offsets(trial, window)
    result = ident.identify(trial, settings.M, settings.grid, g=settings.g,
                            dt_force=settings.dt_force, config=settings.config)
    return result


def identify_batch(entries, settings: BatchSettings):
    """Identify every manifest entry. Returns ``(results, failures)`` in manifest order.

    A failing trial is recorded as ``(entry, message)`` and the batch continues.
    """
    def run(entry):
        try:
            return identify_entry(entry, settings), None
        except Exception as exc:  # reported per trial; batch continues
            return None, f"{entry.path.name}: {type(exc).__name__}: {exc}"

    entries = list(entries)
    outcomes = []
    # first trial serially so the lattice bank is built once
    rest = entries
    while rest and not any(o[0] for o in outcomes):
        outcomes.append(run(rest[0]))
        rest = rest[1:]
    if settings.jobs > 1 and rest:
        with ThreadPoolExecutor(settings.jobs) as pool:
            outcomes.extend(pool.map(run, rest))
    else:
        outcomes.extend(run(e) for e in rest)

    results, failures = [], []
    for entry, (res, err) in zip(entries, outcomes):
        if err is None:
            results.append((entry, res))
        else:
            log.error(err)
            failures.append((entry, err))
    return results, failures


def write_ident_csv(path, results):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(IDENT_COLUMNS)
        for entry, r in results:
            cond = r.condition
            w.writerow([entry.path.name, cond.foot_type, num(cond.theta_a_deg), num(cond.theta_t_deg),
                        num(cond.drop_height_mm), r.trial_index, sig6(r.k), sig6(r.c), sig6(r.zeta),
                        sig6(r.error), r.grid_index[0], r.grid_index[1], f"{r.peak_force:.12g}"])


def read_ident_csv(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise MissingResults(f"identification table {path} not found")
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        rec = dict(row)
        for col in ("theta_a_deg", "theta_t_deg", "drop_height_mm", "k", "c", "zeta",
                    "error", "peak_force_N"):
            rec[col] = float(rec[col])
        for col in ("trial_index", "n_k", "n_c"):
            rec[col] = int(rec[col])
        out.append(rec)
    return out


def condition_of(row) -> ConditionKey:
    return ConditionKey(row["foot_type"], row["theta_a_deg"], row["theta_t_deg"], row["drop_height_mm"])


def summary_document(manifest_path, settings: BatchSettings, results, failures) -> dict:
    summaries = ident.aggregate(r for _, r in results)
    conds = []
    for cond in sorted(summaries, key=_cond_sort_key):
        d = summaries[cond].as_dict()
        conds.append({k: (float(v) if isinstance(v, float) else v) for k, v in d.items()})
    return {
        "manifest": str(Path(manifest_path).resolve()),
        "M": settings.M,
        "g": settings.g,
        "dt_force": settings.dt_force,
        "grid": asdict(settings.grid),
        "ident_config": asdict(settings.config),
        "n_trials": len(results),
        "conditions": conds,
        "failures": [msg for _, msg in failures],
    }


def _cond_sort_key(cond: ConditionKey):
    return (FOOT_ORDER[cond.foot_type], cond.theta_a_deg, cond.theta_t_deg, cond.drop_height_mm)


def write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, allow_nan=False)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Statistics batteries
# ---------------------------------------------------------------------------

@dataclass
class BatteryRow:
    context: dict
    metric: str
    test: str
    comparison: str
    result: stats.StatResult


def _level_key(factor, value):
    return FOOT_ORDER[value] if factor == "foot_type" else value


def _level_label(factor, value):
    return value if factor == "foot_type" else num(value)


def run_battery(rows, grouping: str, metrics=METRICS, alpha: float = 0.05,
                method: str = "large_sample", n_draws: int = 100000, seed: int = 0) -> list[BatteryRow]:
    """Omnibus test plus all pairwise comparisons for every context.

    ``skeleton`` compares foot structures as independent groups
    (Kruskal-Wallis, Steel-Dwass). ``ankle`` and ``toe`` compare angles as
    related samples paired by trial index (Friedman, Wilcoxon signed-rank
    at ``alpha / C(levels, 2)``).
    """
    if grouping not in GROUPINGS:
        raise UnknownGrouping(f"grouping must be one of {sorted(GROUPINGS)}, got {grouping!r}", "grouping")
    factor, context_cols, paired = GROUPINGS[grouping]
    contexts: dict[tuple, list] = {}
    for row in rows:
        contexts.setdefault(tuple(row[c] for c in context_cols), []).append(row)

    out = []
    for ctx_vals in sorted(contexts, key=lambda t: tuple(_level_key(c, v) for c, v in zip(context_cols, t))):
        ctx_rows = contexts[ctx_vals]
        levels = sorted({r[factor] for r in ctx_rows}, key=lambda v: _level_key(factor, v))
        if len(levels) < 2:
            continue
        ctx = dict(zip(context_cols, ctx_vals))
        labels = [_level_label(factor, lv) for lv in levels]
        for metric in metrics:
            if paired:
                out.extend(_paired_battery(ctx, metric, factor, levels, labels, ctx_rows,
                                           alpha, method, n_draws, seed))
            else:
                out.extend(_independent_battery(ctx, metric, factor, levels, labels, ctx_rows,
                                                alpha, method, n_draws, seed))
    if not out:
        raise InsufficientData(f"no context has two or more {factor} levels")
    return out


def _independent_battery(ctx, metric, factor, levels, labels, rows, alpha, method, n_draws, seed):
    groups = [[r[metric] for r in rows if r[factor] == lv] for lv in levels]
    if any(len(g) < 2 for g in groups):
        raise InsufficientData(f"{ctx}: every {factor} level needs >= 2 trials")
    omni = stats.kruskal_wallis(groups, alpha, method, n_draws, seed)
    out = [BatteryRow(ctx, metric, "kruskal_wallis", "omnibus", omni)]
    table = stats.steel_dwass(groups, labels, alpha, method, n_draws, seed)
    for (a, b), res in table:
        out.append(BatteryRow(ctx, metric, "steel_dwass", f"{a} vs {b}", res))
    return out


def _paired_battery(ctx, metric, factor, levels, labels, rows, alpha, method, n_draws, seed):
    by_level = [{r["trial_index"]: r[metric] for r in rows if r[factor] == lv} for lv in levels]
    common = sorted(set.intersection(*(set(d) for d in by_level)))
    if len(common) < 2:
        raise InsufficientData(f"{ctx}: fewer than 2 trial indices shared by all {factor} levels")
    matrix = np.array([[d[t] for d in by_level] for t in common])
    fr_method = "auto" if method == "large_sample" else method
    omni = stats.friedman(matrix, alpha, fr_method, n_draws, seed)
    out = [BatteryRow(ctx, metric, "friedman", "omnibus", omni)]
    pairs = list(itertools.combinations(range(len(levels)), 2))
    pair_alpha = stats.bonferroni(alpha, len(pairs))
    w_method = "auto" if method == "large_sample" else method
    for i, j in pairs:
        try:
            res = stats.wilcoxon_signed_rank(matrix[:, i], matrix[:, j], pair_alpha, w_method, n_draws, seed)
        except AllZeroDifferences:
            res = stats.StatResult("wilcoxon_signed_rank", 0.0, 1.0, pair_alpha, "degenerate")
        out.append(BatteryRow(ctx, metric, "wilcoxon_signed_rank", f"{labels[i]} vs {labels[j]}", res))
    return out


STATS_COLUMNS = ["grouping", "foot_type", "theta_a_deg", "theta_t_deg", "drop_height_mm", "metric",
                 "test", "comparison", "statistic", "p", "alpha", "significant", "method"]


def write_stats_csv(path, grouping, battery):
    factor = GROUPINGS[grouping][0]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATS_COLUMNS)
        for row in battery:
            ctx = {k: (v if k == "foot_type" else num(v)) for k, v in row.context.items()}
            ctx[factor] = "*"
            r = row.result
            w.writerow([grouping, ctx["foot_type"], ctx["theta_a_deg"], ctx["theta_t_deg"],
                        ctx["drop_height_mm"], row.metric, row.test, row.comparison,
                        sig6(r.statistic), f"{r.p:.4f}", sig6(r.alpha), int(r.significant), r.method])


TEST_ABBREV = {"kruskal_wallis": "K.W.", "steel_dwass": "S.D.", "friedman": "Fri.",
               "wilcoxon_signed_rank": "W.S.R."}


def format_stats_table(grouping, battery) -> str:
    """Human-readable layout: omnibus line, then pairwise cells with stars."""
    lines = [f"Comparison: {grouping}", "(*) significant at the stated alpha", ""]
    last = None
    for row in battery:
        head = (tuple(row.context.items()), row.metric)
        if head != last:
            ctx = ", ".join(f"{k}={v if k == 'foot_type' else num(v)}" for k, v in row.context.items())
            lines.append(f"[{row.metric}] {ctx}")
            last = head
        r = row.result
        star = "*" if r.significant else ""
        label = TEST_ABBREV[row.test]
        alpha = stats.truncate_alpha(r.alpha)
        if row.comparison == "omnibus":
            lines.append(f"  {label:<7} (alpha={alpha:g})  {stats.format_p(r.p)}{star}")
        else:
            lines.append(f"  {label:<7} {row.comparison:<18} (alpha={alpha:g})  {stats.format_p(r.p)}{star}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Plot-ready report tables
# ---------------------------------------------------------------------------

def _grouped(rows, keyfn):
    out: dict = {}
    for r in rows:
        out.setdefault(keyfn(r), []).append(r)
    return out


def params_summary_rows(rows):
    out = []
    groups = _grouped(rows, condition_of)
    for cond in sorted(groups, key=_cond_sort_key):
        g = groups[cond]
        rec = {**cond.as_dict(), "n": len(g)}
        for metric in METRICS:
            s = ident.summarize(r[metric] for r in g)
            rec[f"{metric}_mean"] = s.mean
            rec[f"{metric}_sd"] = s.sd
        out.append(rec)
    return out


def peak_vs_height_rows(rows):
    out = []
    groups = _grouped(rows, condition_of)
    for cond in sorted(groups, key=_cond_sort_key):
        s = ident.summarize(r["peak_force_N"] for r in groups[cond])
        out.append({**cond.as_dict(), "n": len(groups[cond]),
                    "peak_force_mean_N": s.mean, "peak_force_sd_N": s.sd})
    return out


def overlay_rows(rows, manifest_path, summary: dict, before_s=0.05, after_s=0.15):
    """Ensemble-averaged measured force against the model at the
    condition-mean (k, c), both aligned on their first main peak."""
    entries, _ = signal.load_manifest(manifest_path)
    by_name = {e.path.name: e for e in entries}
    cfg = summary.get("ident_config", {})
    rel = float(cfg.get("rel_height", ident.IdentConfig.rel_height))
    M, g, dt_force = summary["M"], summary["g"], summary["dt_force"]
    grid = ident.GridSpec(**summary["grid"])
    out = []
    groups = _grouped(rows, condition_of)
    for cond in sorted(groups, key=_cond_sort_key):
        trials = []
        ks, cs = [], []
        for r in groups[cond]:
            entry = by_name[r["file"]]
            tr = signal.load_entry(entry)
            window = None
            if entry.baseline_window_s is not None:
                window = signal.baseline_window_samples(entry.baseline_window_s, tr.force.dt)
            trials.append(signal.apply_offsets(tr, window))
            k, c = ident.grid_params(r["n_k"], r["n_c"], grid)
            ks.append(k)
            cs.append(c)
        avg = signal.ensemble_average(signal.align_trials(trials, rel_height=rel))
        k_mean = ident.summarize(ks).mean
        c_mean = ident.summarize(cs).mean
        dt = avg.dt
        n_before, n_after = int(round(before_s / dt)), int(round(after_s / dt))
        params = smd.SmdParams(M, k_mean, c_mean, cond.drop_height_mm / 1000.0, g, dt_force)
        sim = smd.sampled_response(params, int(round(0.3 / dt)) + n_after + 1, dt)
        sp_sim = signal.main_peak_index(sim, rel)
        i0 = int(round(-avg.t_origin / dt))  # index of t = 0 in the average
        # re-evaluate over the span from the implied contact sample to the end of
        # the record so values match a model-generated record sample for sample
        span = len(avg) - (i0 - sp_sim)
        if span > sp_sim + n_after:
            sim = smd.sampled_response(params, span, dt)
        for j in range(-n_before, n_after + 1):
            m = i0 + j
            if not 0 <= m < len(avg):
                continue
            js = sp_sim + j
            s_val = float(sim[js]) if 0 <= js < len(sim) else 0.0
            out.append({**cond.as_dict(), "time_s": j * dt, "measured_N": float(avg.values[m]),
                        "simulated_N": s_val, "n_trials": avg.n_trials})
    return out


def write_rows_csv(path, rows, columns):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow(["" if r[c] is None else (_cell(r[c])) for c in columns])


def _cell(v):
    if isinstance(v, str):
        return v
    if isinstance(v, int):
        return str(v)
    return f"{float(v):.10g}"
