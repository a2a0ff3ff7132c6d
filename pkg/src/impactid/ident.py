"""Grid-search identification of (k, c) from a measured impact waveform.

Every point of a log-spaced 400 x 400 lattice over k in [1e3, 1e7] N/m and
c in [1, 1e4] N s/m is simulated with the closed-form model, registered on
the measured first positive peak and scored with a peak-weighted squared
error. The lattice minimum is the identified pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import smd
from .errors import (
    EmptyGrid,
    EmptyGroup,
    IndexOutOfRange,
    LengthMismatch,
    NonPositiveInput,
    PeakMismatch,
    ValidationError,
)
from .signal import (
    ConditionKey,
    PeakList,
    TimeSeries,
    TrialRecord,
    contact_onset,
    detect_peaks,
    main_peak_index,
)

PEAK_WEIGHT_GAIN = 0.05


@dataclass(frozen=True)
class GridSpec:
    n_points: int = 400
    k_exp_lo: float = 3.0
    k_exp_hi: float = 7.0
    c_exp_lo: float = 0.0
    c_exp_hi: float = 4.0

    def __post_init__(self):
        if self.n_points < 2:
            raise ValidationError("n_points must be >= 2", "n_points")
        if not (self.k_exp_hi > self.k_exp_lo and self.c_exp_hi > self.c_exp_lo):
            raise ValidationError("grid exponents must satisfy hi > lo", "exponents")

    def k_values(self) -> np.ndarray:
        n = np.arange(1, self.n_points + 1)
        return _lattice(self.k_exp_lo, self.k_exp_hi, n, self.n_points)

    def c_values(self) -> np.ndarray:
        n = np.arange(1, self.n_points + 1)
        return _lattice(self.c_exp_lo, self.c_exp_hi, n, self.n_points)


def _lattice(lo, hi, n, n_points):
    return 10.0 ** (lo + (hi - lo) * (n - 1) / (n_points - 1))


def grid_params(n_k: int, n_c: int, spec: GridSpec = GridSpec()) -> tuple[float, float]:
    """Lattice point for 1-based indices ``(n_k, n_c)``.

    With the default spec this is ``k = 10**(3 + 4 (n-1)/399)`` and
    ``c = 10**(4 (n-1)/399)``.
    """
    for name, n in (("n_k", n_k), ("n_c", n_c)):
        if not 1 <= n <= spec.n_points:
            raise IndexOutOfRange(f"{name}={n} outside 1..{spec.n_points}", name)
    return float(spec.k_values()[n_k - 1]), float(spec.c_values()[n_c - 1])


def damping_ratio(M: float, k: float, c: float) -> float:
    if not (M > 0 and k > 0):
        raise NonPositiveInput("M and k must be positive", "M" if not M > 0 else "k")
    if c < 0:
        raise NonPositiveInput("c must be >= 0", "c")
    return c / (2.0 * math.sqrt(M * k))


# ---------------------------------------------------------------------------
# Weights and error
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightVector:
    w: np.ndarray
    s_p: int
    peak_steps: np.ndarray


def build_weights(measured, peaks: PeakList, s_p: int | None = None,
                  mode: str = "literal") -> WeightVector:
    """Peak-emphasising weights for the measured force samples.

    Weights are 1 up to and including the first positive peak ``s_p``.
    Every later extremum ``s`` gets ``w[s-1] + 0.05 |F[s]|``; all other
    samples stay at 1. In ``"literal"`` mode adjacent extrema compound
    because ``w[s-1]`` may itself be raised; ``"reset"`` always builds on 1.
    """
    f = np.asarray(measured.values if isinstance(measured, TimeSeries) else measured, dtype=float)
    if len(peaks.indices) and (peaks.indices.min() < 0 or peaks.indices.max() >= len(f)):
        raise PeakMismatch("peak indices fall outside the measured series", "peaks")
    if mode not in ("literal", "reset"):
        raise ValidationError(f"unknown weight mode {mode!r}", "mode")
    if s_p is None:
        s_p = peaks.first_positive_peak
    w = np.ones(len(f))
    steps = peaks.indices[peaks.indices > s_p]
    for s in steps:
        base = w[s - 1] if mode == "literal" else 1.0
        w[s] = base + PEAK_WEIGHT_GAIN * abs(f[s])
    return WeightVector(w, int(s_p), steps)


def weighted_error(measured, simulated, w, mode: str = "squared") -> float:
    """``sum w (F_meas - F_sim)**2`` (or ``|.|`` in ``"absolute"`` mode)."""
    y = np.asarray(getattr(measured, "values", measured), dtype=float)
    s = np.asarray(getattr(simulated, "values", simulated), dtype=float)
    ww = np.asarray(w.w if isinstance(w, WeightVector) else w, dtype=float)
    if not (len(y) == len(s) == len(ww)):
        raise LengthMismatch(f"lengths differ: measured {len(y)}, simulated {len(s)}, weights {len(ww)}")
    r = y - s
    return float(_reduce(r[None, :], ww, mode)[0])


def _reduce(r, w, mode):
    if mode == "squared":
        return (r * r * w).sum(axis=1)
    if mode == "absolute":
        return (np.abs(r) * w).sum(axis=1)
    raise ValidationError(f"unknown error mode {mode!r}", "error_mode")


# ---------------------------------------------------------------------------
# Lattice response bank
# ---------------------------------------------------------------------------

def first_main_peaks(x: np.ndarray, rel_height: float) -> np.ndarray:
    """Row-wise index of the first positive local maximum reaching
    ``rel_height`` of the row maximum; -1 where none exists.

    Uses the same extremum rule as :func:`impactid.signal.detect_peaks`
    (plateaus report their first sample).
    """
    rows, n = x.shape
    nxt = np.full((rows, n), np.nan)
    for j in range(n - 2, -1, -1):
        nxt[:, j] = np.where(x[:, j + 1] != x[:, j], x[:, j + 1], nxt[:, j + 1])
    is_max = np.zeros((rows, n), dtype=bool)
    is_max[:, 1:] = (x[:, 1:] > x[:, :-1]) & (nxt[:, 1:] < x[:, 1:])
    top = x.max(axis=1, keepdims=True)
    ok = is_max & (x > 0) & (x >= rel_height * top)
    first = np.argmax(ok, axis=1)
    return np.where(ok.any(axis=1), first, -1)


@dataclass(frozen=True)
class ResponseBank:
    """Unit-force responses of every lattice point sampled at the measurement rate."""

    spec: GridSpec
    M: float
    dt_force: float
    dt: float
    k: np.ndarray
    c: np.ndarray
    zeta: np.ndarray
    unit: np.ndarray
    peak: np.ndarray
    window_samples: int


@lru_cache(maxsize=2)
def response_bank(M: float, dt_force: float, dt: float, spec: GridSpec = GridSpec(),
                  peak_samples: int = 90, window_samples: int = 45,
                  rel_height: float = 0.5, chunk: int = 16000) -> ResponseBank:
    """Precompute the lattice responses. Cached; the bank is read-only."""
    kv, cv = spec.k_values(), spec.c_values()
    k = np.repeat(kv, spec.n_points)
    c = np.tile(cv, spec.n_points)
    n_samples = peak_samples + window_samples
    t = np.arange(n_samples) * dt
    unit = np.empty((len(k), n_samples))
    peak = np.empty(len(k), dtype=int)
    for lo in range(0, len(k), chunk):
        sl = slice(lo, lo + chunk)
        unit[sl] = smd.unit_force_response(M, k[sl], c[sl], dt_force, t)
        peak[sl] = first_main_peaks(unit[sl, :peak_samples], rel_height)
    unit.setflags(write=False)
    zeta = c / (2.0 * np.sqrt(M * k))
    return ResponseBank(spec, M, dt_force, dt, k, c, zeta, unit, peak, window_samples)


# ---------------------------------------------------------------------------
# Identification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IdentConfig:
    """Tunables of the identification; defaults follow the package docs.

    ``rel_height`` picks the first positive peak reaching that fraction of
    the waveform maximum, so baseline noise never registers as the impact.
    """

    window_s: float = 0.15
    onset_fraction: float = 0.05
    rel_height: float = 0.5
    peak_prominence: float = 0.0
    weight_mode: str = "literal"
    error_mode: str = "squared"
    peak_search_s: float = 0.3


@dataclass(frozen=True)
class IdentResult:
    k: float
    c: float
    zeta: float
    error: float
    grid_index: tuple[int, int]
    M: float
    condition: ConditionKey | None = None
    trial_index: int | None = None
    peak_force: float | None = None
    source: str = ""


@dataclass
class GridEvaluation:
    """Full error surface of one trial, kept for reporting and tests."""

    errors: np.ndarray
    s_p: int
    onset: int
    weights: WeightVector
    window: slice
    force: float
    bank: ResponseBank = field(repr=False)

    def simulated_window(self, lattice_index: int) -> np.ndarray:
        return _aligned(self.bank, np.array([lattice_index]), self.onset - self.s_p,
                        self.window.stop - self.window.start)[0] * self.force


def _aligned(bank, rows, shift, width):
    j = bank.peak[rows][:, None] + shift + np.arange(width)[None, :]
    valid = (j >= 0) & (bank.peak[rows][:, None] >= 0)
    vals = np.take_along_axis(bank.unit[rows], np.clip(j, 0, bank.unit.shape[1] - 1), axis=1)
    return np.where(valid, vals, 0.0)


def select_best(errors, k, zeta) -> int:
    """Index minimising (error, zeta, k) lexicographically.

    A pure minimum under a total order, so the answer does not depend on
    the order in which lattice points were evaluated.
    """
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise EmptyGrid("no lattice points to choose from")
    finite = np.isfinite(errors)
    if not finite.any():
        raise EmptyGrid("no lattice point produced a usable response")
    best = errors[finite].min()
    cand = np.flatnonzero(errors == best)
    order = np.lexsort((np.asarray(k)[cand], np.asarray(zeta)[cand]))
    return int(cand[order[0]])


def evaluate_grid(measured, M: float, h: float, spec: GridSpec = GridSpec(),
                  g: float = smd.G_DEFAULT, dt_force: float = smd.DT_FORCE_DEFAULT,
                  config: IdentConfig = IdentConfig(), chunk: int = 40000) -> GridEvaluation:
    """Weighted error of every lattice point against ``measured`` (offset force)."""
    series = measured.force if isinstance(measured, TrialRecord) else measured
    y = np.asarray(series.values, dtype=float)
    dt = series.dt
    window_n = int(round(config.window_s / dt))
    if config.window_s < dt_force:
        raise ValidationError("comparison window shorter than the contact pulse", "window_s")
    bank = response_bank(float(M), float(dt_force), float(dt), spec,
                         int(round(config.peak_search_s / dt)), window_n, float(config.rel_height))

    s_p = main_peak_index(y, config.rel_height)
    onset = contact_onset(y, config.onset_fraction, before=s_p)
    peaks = detect_peaks(y, config.peak_prominence)
    weights = build_weights(y, peaks, s_p=s_p, mode=config.weight_mode)
    stop = min(len(y), onset + window_n)
    y_win = y[onset:stop]
    w_win = weights.w[onset:stop]
    F = smd.impulse_force(M, h, g, dt_force)

    errors = np.empty(len(bank.k))
    for lo in range(0, len(bank.k), chunk):
        rows = np.arange(lo, min(lo + chunk, len(bank.k)))
        sim = F * _aligned(bank, rows, onset - s_p, stop - onset)
        err = _reduce(y_win[None, :] - sim, w_win, config.error_mode)
        err[bank.peak[rows] < 0] = np.inf
        errors[rows] = err
    return GridEvaluation(errors, s_p, onset, weights, slice(onset, stop), F, bank)


def identify(measured, M: float, spec: GridSpec = GridSpec(), h: float | None = None,
             g: float = smd.G_DEFAULT, dt_force: float = smd.DT_FORCE_DEFAULT,
             config: IdentConfig = IdentConfig()) -> IdentResult:
    """Identify (k, c) for one offset-corrected trial.

    ``h`` (m) defaults to the trial's drop height. Returns the lattice point
    of minimum weighted error, ties broken toward smaller damping ratio and
    then smaller k.
    """
    trial = measured if isinstance(measured, TrialRecord) else None
    if h is None:
        if trial is None:
            raise ValidationError("drop height h is required for a bare TimeSeries", "h")
        h = trial.condition.drop_height_mm / 1000.0
    ev = evaluate_grid(measured, M, h, spec, g, dt_force, config)
    bank = ev.bank
    best = select_best(ev.errors, bank.k, bank.zeta)
    n_k, n_c = divmod(best, spec.n_points)
    series = trial.force if trial is not None else measured
    return IdentResult(
        k=float(bank.k[best]),
        c=float(bank.c[best]),
        zeta=float(bank.c[best] / (2.0 * math.sqrt(M * bank.k[best]))),
        error=float(ev.errors[best]),
        grid_index=(n_k + 1, n_c + 1),
        M=float(M),
        condition=trial.condition if trial is not None else None,
        trial_index=trial.trial_index if trial is not None else None,
        peak_force=float(series.values[ev.s_p]),
        source=trial.source if trial is not None else "",
    )


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuantitySummary:
    mean: float
    sd: float | None


@dataclass(frozen=True)
class ConditionSummary:
    condition: ConditionKey
    n: int
    k: QuantitySummary
    c: QuantitySummary
    zeta: QuantitySummary
    peak_force: QuantitySummary | None

    def as_dict(self) -> dict:
        out = {**self.condition.as_dict(), "n": self.n}
        for name in ("k", "c", "zeta", "peak_force"):
            q = getattr(self, name)
            out[f"{name}_mean"] = None if q is None else q.mean
            out[f"{name}_sd"] = None if q is None else q.sd
        return out


def summarize(values) -> QuantitySummary:
    """Mean and sample standard deviation using exactly rounded sums,
    so the result does not depend on the order of ``values``."""
    x = [float(v) for v in values]
    if not x:
        raise EmptyGroup("no values to summarise")
    if all(v == x[0] for v in x):
        return QuantitySummary(x[0], 0.0 if len(x) > 1 else None)
    mean = math.fsum(x) / len(x)
    if len(x) == 1:
        return QuantitySummary(mean, None)
    sd = math.sqrt(math.fsum((v - mean) ** 2 for v in x) / (len(x) - 1))
    return QuantitySummary(mean, sd)


def aggregate(results) -> dict[ConditionKey, ConditionSummary]:
    """Per-condition mean and sample SD of k, c, zeta and peak force."""
    groups: dict[ConditionKey, list[IdentResult]] = {}
    for r in results:
        groups.setdefault(r.condition, []).append(r)
    out = {}
    for cond, rs in groups.items():
        if not rs:
            raise EmptyGroup(f"condition {cond} has no results")
        pf = [r.peak_force for r in rs]
        out[cond] = ConditionSummary(
            condition=cond,
            n=len(rs),
            k=summarize(r.k for r in rs),
            c=summarize(r.c for r in rs),
            zeta=summarize(r.zeta for r in rs),
            peak_force=None if any(p is None for p in pf) else summarize(pf),
        )
    return out
