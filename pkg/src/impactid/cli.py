"""Command-line entry point: ``impactid {simulate,synth,identify,stats,report}``.

Every subcommand accepts ``--config FILE`` (JSON with flat keys named like
the long flags, dashes replaced by underscores); explicit flags win over
the file. Output files go to ``--out``, defaulting to ``$IMPACTID_OUTPUT_DIR``
or ``./impactid_out``.

Exit status is 0 on success, 1 when some trial of a batch failed and 2 for
usage or validation errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from . import ident, report, signal, smd, synth
from .errors import ImpactIdError, MissingResults, ValidationError

OUTPUT_ENV = "IMPACTID_OUTPUT_DIR"
DEFAULT_OUTPUT = "impactid_out"

log = logging.getLogger("impactid")


class UsageError(Exception):
    pass


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


def _settings(args, parser) -> dict:
    """Merge the JSON config file with explicitly given flags."""
    merged = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(doc, dict):
            raise UsageError("config file must hold a JSON object")
        known = {a.dest for a in parser._actions}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        merged.update(doc)
    for key, value in vars(args).items():
        if value is not None and key not in ("command", "func", "config"):
            merged[key] = value
    return merged


def _require(opts, *names):
    missing = [n for n in names if opts.get(n) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"the following arguments are required: {flags}")


def _out_dir(opts) -> Path:
    out = Path(opts["out"]) if opts.get("out") else default_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(opts) -> int:
    _require(opts, "M", "k", "c", "h")
    params = smd.SmdParams(float(opts["M"]), float(opts["k"]), float(opts["c"]), float(opts["h"]),
                           float(opts.get("g", smd.G_DEFAULT)),
                           float(opts.get("dt_force", smd.DT_FORCE_DEFAULT)))
    duration = float(opts.get("duration", 0.5))
    dt = float(opts.get("dt", signal.DEFAULT_DT))
    if opts.get("method", "rk4") == "rk4":
        solver = smd.SolverConfig(step=float(opts.get("step", 1.0 / 30000.0)), duration=duration)
        series = smd.resample(smd.simulate_response(params, solver), dt)
        values = series.values
    else:
        values = smd.sampled_response(params, int(round(duration / dt)) + 1, dt)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time_s", "force_R_N"])
    for i, v in enumerate(values.tolist()):
        w.writerow([repr(i * dt), repr(v)])
    if opts.get("out"):
        Path(opts["out"]).write_text(buf.getvalue(), encoding="utf-8")
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def cmd_synth(opts) -> int:
    _require(opts, "spec")
    try:
        with open(opts["spec"], encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read synth spec {opts['spec']}: {exc}") from None
    for key in ("seed", "noise_sigma", "trials_per_condition"):
        if opts.get(key) is not None:
            doc[key] = opts[key]
    try:
        spec = synth.SynthSpec.from_dict(doc)
    except KeyError as exc:
        raise ValidationError(f"synth spec missing field {exc.args[0]!r}", exc.args[0]) from None
    paths, manifest, _ = synth.generate_dataset(spec, _out_dir(opts))
    print(f"wrote {len(paths)} trials; manifest {manifest}")
    return 0


def _grid_from(opts) -> ident.GridSpec:
    kw = {f.name: opts[f.name] for f in fields(ident.GridSpec) if opts.get(f.name) is not None}
    return ident.GridSpec(**kw)


def _ident_config_from(opts) -> ident.IdentConfig:
    kw = {f.name: opts[f.name] for f in fields(ident.IdentConfig) if opts.get(f.name) is not None}
    return ident.IdentConfig(**kw)


def cmd_identify(opts) -> int:
    _require(opts, "manifest")
    manifest = Path(opts["manifest"])
    if not manifest.exists():
        raise ValidationError(f"manifest {manifest} does not exist", "manifest")
    entries, extra = signal.load_manifest(manifest)
    if not entries:
        raise ValidationError(f"manifest {manifest} lists no trials", "manifest")
    M = opts.get("M", extra.get("mass_kg"))
    if M is None:
        raise UsageError("the following arguments are required: --M (or mass_kg in the manifest)")
    settings = report.BatchSettings(
        M=float(M),
        g=float(opts.get("g", extra.get("g", smd.G_DEFAULT))),
        dt_force=float(opts.get("dt_force", extra.get("dt_force_s", smd.DT_FORCE_DEFAULT))),
        grid=_grid_from(opts),
        config=_ident_config_from(opts),
        jobs=int(opts.get("jobs", 1)),
    )
    out = _out_dir(opts)
    results, failures = report.identify_batch(entries, settings)
    report.write_ident_csv(out / "ident.csv", results)
    report.write_json(out / "summary.json",
                      report.summary_document(manifest, settings, results, failures))
    for _, msg in failures:
        print(f"trial failed: {msg}", file=sys.stderr)
    print(f"identified {len(results)}/{len(entries)} trials -> {out / 'ident.csv'}")
    return 1 if failures else 0


def cmd_stats(opts) -> int:
    _require(opts, "ident", "grouping")
    alpha = float(opts.get("alpha", 0.05))
    if not 0 < alpha <= 1:
        raise ValidationError("alpha must lie in (0, 1]", "alpha")
    rows = report.read_ident_csv(opts["ident"])
    metrics = opts.get("metrics") or list(report.METRICS)
    unknown = [m for m in metrics if m not in report.METRICS]
    if unknown:
        raise ValidationError(f"unknown metrics {unknown}", "metrics")
    grouping = opts["grouping"]
    battery = report.run_battery(rows, grouping, metrics, alpha, opts.get("method", "large_sample"),
                                 int(opts.get("n_draws", 100000)), int(opts.get("seed", 0)))
    out = _out_dir(opts)
    report.write_stats_csv(out / f"stats_{grouping}.csv", grouping, battery)
    (out / f"stats_{grouping}.txt").write_text(report.format_stats_table(grouping, battery),
                                               encoding="utf-8")
    print(f"{len(battery)} tests -> {out / f'stats_{grouping}.csv'}")
    return 0


def cmd_report(opts) -> int:
    _require(opts, "results")
    results = Path(opts["results"])
    rows = report.read_ident_csv(results / "ident.csv")
    if not rows:
        raise MissingResults(f"{results / 'ident.csv'} holds no trials")
    summary_path = results / "summary.json"
    if not summary_path.exists():
        raise MissingResults(f"{summary_path} not found")
    with open(summary_path, encoding="utf-8") as fh:
        summary = json.load(fh)
    manifest = opts.get("manifest", summary["manifest"])
    out = _out_dir(opts)
    cond_cols = ["foot_type", "theta_a_deg", "theta_t_deg", "drop_height_mm"]
    report.write_rows_csv(out / "overlay.csv", report.overlay_rows(rows, manifest, summary),
                          cond_cols + ["time_s", "measured_N", "simulated_N", "n_trials"])
    report.write_rows_csv(out / "peak_vs_height.csv", report.peak_vs_height_rows(rows),
                          cond_cols + ["n", "peak_force_mean_N", "peak_force_sd_N"])
    metric_cols = [f"{m}_{s}" for m in report.METRICS for s in ("mean", "sd")]
    report.write_rows_csv(out / "params_summary.csv", report.params_summary_rows(rows),
                          cond_cols + ["n"] + metric_cols)
    print(f"report tables -> {out}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="impactid", description=__doc__.splitlines()[0])
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file with flat option keys")
        sp.add_argument("--out", help="output directory (file for simulate)")

    s = sub.add_parser("simulate", help="model waveform as CSV")
    common(s)
    for name in ("M", "k", "c", "h"):
        s.add_argument(f"--{name}", type=float)
    s.add_argument("--g", type=float)
    s.add_argument("--dt-force", type=float)
    s.add_argument("--dt", type=float, help="output sample interval (s)")
    s.add_argument("--duration", type=float)
    s.add_argument("--step", type=float, help="RK4 step (s)")
    s.add_argument("--method", choices=("rk4", "analytic"))
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("synth", help="write a synthetic dataset")
    common(s)
    s.add_argument("--spec", help="JSON description of conditions")
    s.add_argument("--seed", type=int)
    s.add_argument("--noise-sigma", type=float)
    s.add_argument("--trials-per-condition", type=int)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("identify", help="grid-search (k, c) for every trial in a manifest")
    common(s)
    s.add_argument("--manifest")
    s.add_argument("--M", type=float)
    s.add_argument("--g", type=float)
    s.add_argument("--dt-force", type=float)
    s.add_argument("--window-s", type=float)
    s.add_argument("--onset-fraction", type=float)
    s.add_argument("--rel-height", type=float)
    s.add_argument("--peak-prominence", type=float)
    s.add_argument("--peak-search-s", type=float)
    s.add_argument("--weight-mode", choices=("literal", "reset"))
    s.add_argument("--error-mode", choices=("squared", "absolute"))
    s.add_argument("--n-points", type=int)
    for name in ("k_exp_lo", "k_exp_hi", "c_exp_lo", "c_exp_hi"):
        s.add_argument("--" + name.replace("_", "-"), type=float)
    s.add_argument("--jobs", type=int)
    s.set_defaults(func=cmd_identify)

    s = sub.add_parser("stats", help="nonparametric comparison tables")
    common(s)
    s.add_argument("--ident", help="ident.csv from the identify step")
    s.add_argument("--grouping", choices=sorted(report.GROUPINGS))
    s.add_argument("--metrics", nargs="+")
    s.add_argument("--alpha", type=float)
    s.add_argument("--method", choices=("large_sample", "monte_carlo"))
    s.add_argument("--n-draws", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("report", help="plot-ready CSV tables")
    common(s)
    s.add_argument("--results", help="directory holding ident.csv and summary.json")
    s.add_argument("--manifest")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    del args.log_level
    sub = parser._subparsers._group_actions[0].choices[args.command]
    try:
        return args.func(_settings(args, sub))
    except UsageError as exc:
        sub.error(str(exc))
    except ValidationError as exc:
        where = f"invalid value for {exc.field}: " if exc.field else ""
        print(f"error: {where}{exc}", file=sys.stderr)
        return 2
    except ImpactIdError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
