"""Ingestion and conditioning of drop-trial recordings.

A trial is a pair of co-sampled channels (load-cell force in N, infrared
height in mm) recorded at 300 Hz for 3 s. The functions here load trials
from CSV, zero the channels, locate force peaks, align repeated trials on
their impact peak and average them.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.signal import peak_prominences

from .errors import (
    AlreadyOffsetWarning,
    EmptyInput,
    MalformedCsv,
    MissingColumn,
    NoOverlap,
    NoPositivePeak,
    NonFiniteSample,
    NonUniformSampling,
    ValidationError,
    WindowOutOfRange,
)

DEFAULT_DT = 1.0 / 300.0
JITTER_TOLERANCE = 0.01
BASELINE_SECONDS = 0.5
RESTING_SECONDS = 0.5

FOOT_TYPES = ("flat", "rigid", "soft")

DEFAULT_SCHEMA = {"time": "time_s", "force": "force_N", "height": "height_mm"}


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled scalar signal.

    Sample ``i`` sits at time ``t_origin + i * dt``. ``n_trials`` is only
    meaningful for ensemble averages.
    """

    values: np.ndarray
    dt: float = DEFAULT_DT
    t_origin: float = 0.0
    units: str = ""
    n_trials: int = 1

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValidationError("TimeSeries values must be one-dimensional", "values")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValidationError(f"dt must be positive, got {self.dt}", "dt")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        return self.t_origin + np.arange(len(self.values)) * self.dt

    def with_values(self, values) -> "TimeSeries":
        return replace(self, values=np.asarray(values, dtype=float))


@dataclass(frozen=True)
class ConditionKey:
    foot_type: str
    theta_a_deg: float = 0.0
    theta_t_deg: float = 0.0
    drop_height_mm: float = 200.0

    def __post_init__(self):
        if self.foot_type not in FOOT_TYPES:
            raise ValidationError(
                f"foot_type must be one of {FOOT_TYPES}, got {self.foot_type!r}", "foot_type"
            )
        for name in ("theta_a_deg", "theta_t_deg", "drop_height_mm"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValidationError(f"{name} must be finite", name)
            object.__setattr__(self, name, value)
        if self.drop_height_mm <= 0:
            raise ValidationError("drop_height_mm must be positive", "drop_height_mm")

    def as_dict(self) -> dict:
        return {
            "foot_type": self.foot_type,
            "theta_a_deg": self.theta_a_deg,
            "theta_t_deg": self.theta_t_deg,
            "drop_height_mm": self.drop_height_mm,
        }


@dataclass(frozen=True)
class TrialRecord:
    condition: ConditionKey
    trial_index: int
    force: TimeSeries
    height: TimeSeries
    offsets_applied: dict = field(default_factory=lambda: {"force": False, "height": False})
    source: str = ""

    def __post_init__(self):
        if int(self.trial_index) < 1:
            raise ValidationError("trial_index must be >= 1", "trial_index")


@dataclass(frozen=True)
class PeakList:
    """Interior local extrema of a series.

    ``polarity`` is +1 for maxima and -1 for minima. ``first_positive_peak``
    is the first maximum with a strictly positive sample value.
    """

    indices: np.ndarray
    polarity: np.ndarray
    values: np.ndarray

    def __len__(self):
        return len(self.indices)

    @property
    def maxima(self) -> np.ndarray:
        return self.indices[self.polarity > 0]

    @property
    def first_positive_peak(self) -> int:
        return self.first_peak_at_least(0.0, strict=True)

    def first_peak_at_least(self, threshold: float, strict: bool = False) -> int:
        """First maximum whose value is >= ``threshold`` (> when ``strict``)."""
        vals = self.values[self.indices]
        ok = (self.polarity > 0) & (vals > 0)
        ok &= (vals > threshold) if strict else (vals >= threshold)
        hits = np.flatnonzero(ok)
        if len(hits) == 0:
            raise NoPositivePeak()
        return int(self.indices[hits[0]])


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8", newline=""), str(source)
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"), newline=""), "<bytes>"
    if isinstance(source, io.TextIOBase):
        return source, getattr(source, "name", "<stream>")
    # binary file object
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), getattr(source, "name", "<stream>")


def load_trial(source, schema=None, condition=None, trial_index=1, dt=None) -> TrialRecord:
    """Parse one raw trial CSV.

    Parameters
    ----------
    source : path, bytes or file object
        CSV with a header row. UTF-8, LF or CRLF line endings.
    schema : dict, optional
        Maps the logical channels ``time``, ``force`` and ``height`` to
        column names. Defaults to ``time_s``, ``force_N``, ``height_mm``.
    condition : ConditionKey, optional
        Attached to the returned record; a placeholder soft-foot key is
        used when omitted.
    trial_index : int
    dt : float, optional
        Nominal sample interval. Inferred from the timestamps when omitted.

    Raises
    ------
    MissingColumn, MalformedCsv, NonFiniteSample, NonUniformSampling
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    handle, name = _open_text(source)
    try:
        reader = csv.reader(handle)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MalformedCsv(f"{name}: empty file") from None
        cols = {}
        for key in ("time", "force", "height"):
            col = schema[key]
            if col not in header:
                raise MissingColumn(f"{name}: missing column {col!r}")
            cols[key] = header.index(col)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                rows.append([float(row[cols[k]]) for k in ("time", "force", "height")])
            except (ValueError, IndexError):
                raise MalformedCsv(f"{name}: unparseable row {lineno}: {row!r}") from None
    finally:
        if isinstance(source, (str, os.PathLike)):
            handle.close()

    if len(rows) < 2:
        raise MalformedCsv(f"{name}: need at least two samples, got {len(rows)}")
    data = np.array(rows)
    bad = ~np.isfinite(data)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        channel = ("time", "force", "height")[c]
        raise NonFiniteSample(f"{name}: non-finite {channel} value at data row {r + 1}")

    t = data[:, 0]
    steps = np.diff(t)
    nominal = float(dt) if dt is not None else float(np.median(steps))
    if nominal <= 0:
        raise NonUniformSampling(f"{name}: timestamps are not increasing")
    jitter = np.abs(steps - nominal) / nominal
    if jitter.max() > JITTER_TOLERANCE:
        i = int(np.argmax(jitter))
        raise NonUniformSampling(
            f"{name}: sample step {steps[i]:.6g} s at row {i + 2} deviates "
            f"{100 * jitter[i]:.1f}% from nominal {nominal:.6g} s"
        )

    if condition is None:
        condition = ConditionKey("soft")
    force = TimeSeries(data[:, 1], dt=nominal, t_origin=float(t[0]), units="N")
    height = TimeSeries(data[:, 2], dt=nominal, t_origin=float(t[0]), units="mm")
    return TrialRecord(condition, int(trial_index), force, height, source=name)


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    condition: ConditionKey
    trial_index: int
    dt_s: float | None = None
    baseline_window_s: tuple | None = None


def load_manifest(path) -> tuple[list[ManifestEntry], dict]:
    """Read a JSON manifest.

    Returns the trial entries (file paths resolved against the manifest's
    directory) and the remaining top-level keys, e.g. ``mass_kg``.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if isinstance(doc, list):
        doc = {"trials": doc}
    entries = []
    for i, item in enumerate(doc.get("trials", [])):
        try:
            cond = ConditionKey(
                item["foot_type"],
                item.get("theta_a_deg", 0.0),
                item.get("theta_t_deg", 0.0),
                item["drop_height_mm"],
            )
            window = item.get("baseline_window_s")
            entries.append(ManifestEntry(
                path=(path.parent / item["file"]),
                condition=cond,
                trial_index=int(item.get("trial_index", 1)),
                dt_s=item.get("dt_s"),
                baseline_window_s=tuple(window) if window is not None else None,
            ))
        except KeyError as exc:
            raise ValidationError(f"manifest entry {i}: missing field {exc.args[0]!r}",
                                  exc.args[0]) from None
    extra = {k: v for k, v in doc.items() if k != "trials"}
    return entries, extra


def load_entry(entry: ManifestEntry, schema=None) -> TrialRecord:
    return load_trial(entry.path, schema, entry.condition, entry.trial_index, entry.dt_s)


# ---------------------------------------------------------------------------
# Conditioning
# ---------------------------------------------------------------------------

def _check_window(window, n, label):
    lo, hi = int(window[0]), int(window[1])
    if lo < 0 or hi > n or lo >= hi:
        raise WindowOutOfRange(f"{label} window [{lo}, {hi}) outside record of {n} samples", label)
    return lo, hi


def apply_offsets(trial: TrialRecord, baseline_window=None, resting_window=None) -> TrialRecord:
    """Zero the force channel on its pre-release baseline and the height
    channel on its post-landing resting level.

    Windows are half-open sample-index ranges ``(start, stop)``. Defaults:
    the first 0.5 s for force, the last 0.5 s for height. A channel whose
    offset flag is already set is left untouched and an
    :class:`AlreadyOffsetWarning` is issued.
    """
    n_f, n_h = len(trial.force), len(trial.height)
    if baseline_window is None:
        baseline_window = (0, min(n_f, max(1, round(BASELINE_SECONDS / trial.force.dt))))
    if resting_window is None:
        m = min(n_h, max(1, round(RESTING_SECONDS / trial.height.dt)))
        resting_window = (n_h - m, n_h)
    b0, b1 = _check_window(baseline_window, n_f, "baseline")
    r0, r1 = _check_window(resting_window, n_h, "resting")

    flags = dict(trial.offsets_applied)
    force, height = trial.force, trial.height
    if flags.get("force"):
        warnings.warn(f"trial {trial.trial_index}: force offset already applied", AlreadyOffsetWarning)
    else:
        force = force.with_values(force.values - force.values[b0:b1].mean())
        flags["force"] = True
    if flags.get("height"):
        warnings.warn(f"trial {trial.trial_index}: height offset already applied", AlreadyOffsetWarning)
    else:
        height = height.with_values(height.values - height.values[r0:r1].mean())
        flags["height"] = True
    return replace(trial, force=force, height=height, offsets_applied=flags)


def baseline_window_samples(window_s, dt):
    """Convert a ``(start_s, stop_s)`` window relative to record start into sample indices."""
    return (int(round(window_s[0] / dt)), int(round(window_s[1] / dt)))


def _extrema(x: np.ndarray):
    """Interior local extrema by sign change of the first difference.

    Runs of equal samples are collapsed first so a plateau extremum is
    reported at its first index.
    """
    n = len(x)
    if n < 3:
        return np.array([], dtype=int), np.array([], dtype=int)
    starts = np.concatenate(([0], np.flatnonzero(np.diff(x) != 0) + 1))
    run_vals = x[starts]
    if len(run_vals) < 3:
        return np.array([], dtype=int), np.array([], dtype=int)
    d = np.sign(np.diff(run_vals))
    turn = d[:-1] != d[1:]
    idx = starts[1:-1][turn]
    pol = np.where(d[:-1][turn] > 0, 1, -1)
    return idx.astype(int), pol.astype(int)


def detect_peaks(series, min_prominence: float = 0.0) -> PeakList:
    """Local maxima and minima of ``series`` with at least ``min_prominence``.

    Prominence follows the usual topographic definition (height above the
    higher of the two flanking bases); minima are measured on the negated
    signal. Accepts a :class:`TimeSeries` or a plain array.
    """
    x = np.asarray(series.values if isinstance(series, TimeSeries) else series, dtype=float)
    if len(x) < 3:
        raise ValidationError("detect_peaks needs at least 3 samples", "series")
    if min_prominence < 0:
        raise ValidationError("min_prominence must be >= 0", "min_prominence")
    idx, pol = _extrema(x)
    if min_prominence > 0 and len(idx):
        prom = np.empty(len(idx))
        up = pol > 0
        if up.any():
            prom[up] = peak_prominences(x, idx[up])[0]
        if (~up).any():
            prom[~up] = peak_prominences(-x, idx[~up])[0]
        keep = prom >= min_prominence
        idx, pol = idx[keep], pol[keep]
    return PeakList(idx, pol, x)


def main_peak_index(values, rel_height: float = 0.0) -> int:
    """First positive local maximum reaching ``rel_height`` of the series maximum.

    With ``rel_height=0`` this is exactly ``detect_peaks(values).first_positive_peak``.
    """
    x = np.asarray(values, dtype=float)
    peaks = detect_peaks(x)
    if rel_height <= 0:
        return peaks.first_positive_peak
    return peaks.first_peak_at_least(rel_height * x.max())


def contact_onset(values, fraction: float = 0.05, before: int | None = None) -> int:
    """First sample whose value exceeds ``fraction`` of the series maximum.

    When ``before`` is given, the search is restricted to the last
    contiguous run below threshold that precedes it.
    """
    x = np.asarray(values, dtype=float)
    peak = x.max()
    if peak <= 0:
        raise NoPositivePeak("series never rises above zero")
    above = x > fraction * peak
    if before is None:
        return int(np.argmax(above))
    below = np.flatnonzero(~above[: before + 1])
    return int(below[-1] + 1) if len(below) else 0


def align_trials(trials, rel_height: float = 0.0, min_prominence: float = 0.0):
    """Shift each trial so its first positive force peak sits at t = 0.

    Only integer-sample shifts are applied: ``t_origin`` becomes
    ``-peak_index * dt`` on both channels.
    """
    out = []
    for trial in trials:
        f = trial.force.values
        try:
            if min_prominence > 0:
                peaks = detect_peaks(f, min_prominence)
                s_p = peaks.first_peak_at_least(rel_height * f.max()) if rel_height > 0 \
                    else peaks.first_positive_peak
            else:
                s_p = main_peak_index(f, rel_height)
        except NoPositivePeak:
            raise NoPositivePeak(f"trial {trial.trial_index}: no positive force peak",
                                 trial.trial_index) from None
        t0 = -s_p * trial.force.dt
        out.append(replace(
            trial,
            force=replace(trial.force, t_origin=t0),
            height=replace(trial.height, t_origin=t0),
        ))
    return out


def ensemble_average(aligned, channel: str = "force") -> TimeSeries:
    """Pointwise mean over the intersection of the aligned sample windows.

    The mean is taken as ``x_0 + mean(x_i - x_0)`` so identical inputs
    average to themselves bit for bit.
    """
    aligned = list(aligned)
    if not aligned:
        raise EmptyInput("ensemble_average needs at least one trial", "aligned")
    series = [getattr(t, channel) for t in aligned]
    dt = series[0].dt
    if any(not math.isclose(s.dt, dt, rel_tol=1e-9) for s in series):
        raise ValidationError("trials have different sample intervals", "aligned")
    starts = [int(round(s.t_origin / dt)) for s in series]
    lo = max(starts)
    hi = min(st + len(s) for st, s in zip(starts, series))
    if hi <= lo:
        raise NoOverlap("aligned trials share no samples")
    stack = np.stack([s.values[lo - st: hi - st] for st, s in zip(starts, series)])
    ref = stack[0]
    mean = ref + (stack - ref).mean(axis=0)
    return TimeSeries(mean, dt=dt, t_origin=lo * dt, units=series[0].units, n_trials=len(series))


def peak_force(trial, rel_height: float = 0.0, min_prominence: float = 0.0) -> float:
    """Force value at the first positive peak of the (offset) force channel."""
    f = trial.force.values if isinstance(trial, TrialRecord) else np.asarray(
        trial.values if isinstance(trial, TimeSeries) else trial, dtype=float)
    peaks = detect_peaks(f, min_prominence)
    s_p = peaks.first_peak_at_least(rel_height * f.max()) if rel_height > 0 \
        else peaks.first_positive_peak
    return float(f[s_p])


def write_trial_csv(path, force, height, dt, t_origin=0.0):
    """Write a trial in the raw CSV layout (``time_s,force_N,height_mm``).

    Values are written with 17 significant digits so they round-trip
    exactly through :func:`load_trial`.
    """
    force = np.asarray(force, dtype=float)
    height = np.asarray(height, dtype=float)
    t = t_origin + np.arange(len(force)) * dt
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("time_s,force_N,height_mm\n")
        for ti, fi, hi in zip(t.tolist(), force.tolist(), height.tolist()):
            fh.write(f"{ti!r},{fi!r},{hi!r}\n")
