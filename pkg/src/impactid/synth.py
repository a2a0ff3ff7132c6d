"""Synthetic drop trials with known ground truth.

Each trial is a 3 s, 300 Hz record in the raw CSV layout: the foot is
released about 1 s in, free-falls, and the closed-form model response is
written from the contact sample on. A manifest and a truth file are
written alongside so the whole pipeline can be checked end to end.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import smd
from .errors import ImpactIdError, ValidationError
from .signal import DEFAULT_DT, ConditionKey, TimeSeries, write_trial_csv


@dataclass(frozen=True)
class SynthCondition:
    condition: ConditionKey
    k: float
    c: float


@dataclass(frozen=True)
class SynthSpec:
    M: float
    conditions: list
    trials_per_condition: int = 10
    noise_sigma: float = 0.0
    seed: int = 0
    g: float = smd.G_DEFAULT
    dt_force: float = smd.DT_FORCE_DEFAULT
    dt: float = DEFAULT_DT
    duration_s: float = 3.0
    release_s: float = 1.0
    noise_sigmas: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trials_per_condition < 1:
            raise ValidationError("trials_per_condition must be >= 1", "trials_per_condition")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be >= 0", "noise_sigma")
        if not self.conditions:
            raise ValidationError("at least one condition is required", "conditions")
        keys = [sc.condition for sc in self.conditions]
        if len(set(keys)) != len(keys):
            raise ValidationError("conditions must be distinct", "conditions")

    def sigma_for(self, index: int) -> float:
        """Noise level of condition ``index``; per-condition overrides win."""
        return float(self.noise_sigmas.get(index, self.noise_sigma))

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthSpec":
        conds = []
        for item in doc["conditions"]:
            key = ConditionKey(item["foot_type"], item.get("theta_a_deg", 0.0),
                               item.get("theta_t_deg", 0.0), item["drop_height_mm"])
            conds.append(SynthCondition(key, float(item["k"]), float(item["c"])))
        known = {"trials_per_condition", "noise_sigma", "seed", "g", "dt_force", "dt",
                 "duration_s", "release_s"}
        kwargs = {k: doc[k] for k in known if k in doc}
        return cls(M=float(doc["M"]), conditions=conds, **kwargs)


def inject_noise(series: TimeSeries, sigma: float, seed: int) -> TimeSeries:
    """Add N(0, sigma^2) noise; sample ``i`` depends only on ``(seed, i)``."""
    if sigma < 0:
        raise ValidationError("sigma must be >= 0", "sigma")
    if sigma == 0:
        return series
    rng = np.random.default_rng(seed)
    return series.with_values(series.values + sigma * rng.standard_normal(len(series)))


def trial_seed(seed: int, condition_index: int, trial_index: int) -> int:
    return int(np.random.SeedSequence([seed, condition_index, trial_index]).generate_state(1)[0])


def synth_trial(spec: SynthSpec, sc: SynthCondition, trial_index: int, condition_index: int = 0):
    """Return ``(force, height, contact_index)`` arrays for one trial."""
    h = sc.condition.drop_height_mm / 1000.0
    params = smd.SmdParams(spec.M, sc.k, sc.c, h, spec.g, spec.dt_force)
    n = int(round(spec.duration_s / spec.dt))
    t_fall = math.sqrt(2.0 * h / spec.g)
    n0 = int(round((spec.release_s + t_fall) / spec.dt))
    if n0 >= n:
        raise ValidationError("record too short for the requested drop", "duration_s")
    t_release = n0 * spec.dt - t_fall

    force = np.zeros(n)
    force[n0:] = smd.sampled_response(params, n - n0, spec.dt)
    sigma = spec.sigma_for(condition_index)
    if sigma > 0:
        force = inject_noise(TimeSeries(force, spec.dt), sigma,
                             trial_seed(spec.seed, condition_index, trial_index)).values

    t = np.arange(n) * spec.dt
    height = np.full(n, h * 1000.0)
    falling = (t >= t_release) & (np.arange(n) < n0)
    height[falling] = (h - 0.5 * spec.g * (t[falling] - t_release) ** 2) * 1000.0
    x, _, _ = smd.analytic_response(params, t[n0:] - t[n0])
    height[n0:] = -x * 1000.0
    return force, height, n0


def _fmt_angle(a):
    return f"{a:g}".replace("-", "m")


def trial_filename(cond: ConditionKey, trial_index: int) -> str:
    return (f"{cond.foot_type}_a{_fmt_angle(cond.theta_a_deg)}_t{_fmt_angle(cond.theta_t_deg)}"
            f"_h{cond.drop_height_mm:g}_trial{trial_index:02d}.csv")


def generate_dataset(spec: SynthSpec, out_dir) -> tuple[list[Path], Path, Path]:
    """Write every trial CSV, then ``truth.json`` and finally ``manifest.json``.

    Returns ``(csv_paths, manifest_path, truth_path)``.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ImpactIdError(f"cannot create {out}: {exc}") from exc

    paths, entries, truth = [], [], []
    for ci, sc in enumerate(spec.conditions):
        zeta = sc.c / (2.0 * math.sqrt(spec.M * sc.k))
        for trial in range(1, spec.trials_per_condition + 1):
            force, height, n0 = synth_trial(spec, sc, trial, ci)
            name = trial_filename(sc.condition, trial)
            write_trial_csv(out / name, force, height, spec.dt)
            paths.append(out / name)
            entry = {"file": name, **sc.condition.as_dict(), "trial_index": trial}
            entries.append({**entry, "dt_s": spec.dt})
            truth.append({**entry, "k": sc.k, "c": sc.c, "zeta": zeta,
                          "contact_index": n0, "noise_sigma": spec.sigma_for(ci)})

    truth_path = out / "truth.json"
    with open(truth_path, "w", encoding="utf-8") as fh:
        json.dump({"M": spec.M, "trials": truth}, fh, indent=1)
    manifest_path = out / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump({"mass_kg": spec.M, "g": spec.g, "dt_force_s": spec.dt_force,
                   "trials": entries}, fh, indent=1)
    return paths, manifest_path, truth_path
