# The whole pipeline through the command line: synthesize a study,
# identify every trial, compare foot structures and write report tables.
import csv
import json
import tempfile
from pathlib import Path

from impactid import cli

work = Path(tempfile.mkdtemp(prefix="impactid_demo_"))
conditions = []
for foot, k, c in [("flat", 2.2e4, 14.0), ("rigid", 3.0e4, 24.0), ("soft", 1.4e4, 30.0)]:
    for h in (50, 100, 200):
        conditions.append({"foot_type": foot, "theta_a_deg": 0, "theta_t_deg": 0,
                           "drop_height_mm": h, "k": k, "c": c})
(work / "study.json").write_text(json.dumps({
    "M": 0.5, "trials_per_condition": 10, "noise_sigma": 0.5, "seed": 7, "conditions": conditions}))

cli.main(["synth", "--spec", str(work / "study.json"), "--out", str(work / "data")])
cli.main(["identify", "--manifest", str(work / "data" / "manifest.json"),
          "--out", str(work / "results"), "--jobs", "4"])
cli.main(["stats", "--ident", str(work / "results" / "ident.csv"), "--grouping", "skeleton",
          "--out", str(work / "results")])
cli.main(["report", "--results", str(work / "results"), "--out", str(work / "report")])

# first block of the significance table: peak force at 50 mm
table = (work / "results" / "stats_skeleton.txt").read_text().splitlines()
print("\n".join(table[:8]))
with open(work / "report" / "params_summary.csv", newline="") as fh:
    for row in csv.DictReader(fh):
        print(f"{row['foot_type']:>6} {float(row['drop_height_mm']):5.0f} mm  "
              f"k={float(row['k_mean']):8.0f}  zeta={float(row['zeta_mean']):.3f}")
print(f"outputs in {work}")
