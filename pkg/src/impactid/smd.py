"""Spring-mass-damper impulse model of a landing foot.

The falling mass ``M`` hits the ground and receives a constant force
``F = M * sqrt(2 g h) / dt_force`` for ``dt_force`` seconds, starting from
rest. The equation of motion is::

    M x'' = -k x - c x' + F(t)

and the force transmitted to the ankle is ``F_R = k x + c x'``. There is no
gravity term after contact.

Two evaluators are provided: a closed form (:func:`unit_response`,
:func:`analytic_response`) used for grid search and synthesis, and a fixed
step RK4 integrator (:func:`simulate_response`) kept as an independent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig, NonPositiveInput, UnstableIntegration, UpsamplingRequested
from .signal import TimeSeries

G_DEFAULT = 9.81
DT_FORCE_DEFAULT = 0.015


def _require_positive(**kwargs):
    for name, value in kwargs.items():
        if not (value > 0 and math.isfinite(value)):
            raise NonPositiveInput(f"{name} must be positive and finite, got {value!r}", name)


@dataclass(frozen=True)
class SmdParams:
    M: float
    k: float
    c: float
    h: float
    g: float = G_DEFAULT
    dt_force: float = DT_FORCE_DEFAULT

    def __post_init__(self):
        _require_positive(M=self.M, k=self.k, h=self.h, g=self.g, dt_force=self.dt_force)
        if not (self.c >= 0 and math.isfinite(self.c)):
            raise NonPositiveInput(f"c must be >= 0, got {self.c!r}", "c")

    @property
    def force(self) -> float:
        return impulse_force(self.M, self.h, self.g, self.dt_force)

    @property
    def zeta(self) -> float:
        return self.c / (2.0 * math.sqrt(self.M * self.k))


@dataclass(frozen=True)
class SmdState:
    x: float
    v: float
    t: float


@dataclass(frozen=True)
class SolverConfig:
    step: float = 1.0 / 30000.0
    method: str = "rk4_fixed"
    duration: float = 0.5

    def validate(self, dt_force: float):
        if self.method != "rk4_fixed":
            raise InvalidConfig(f"unknown method {self.method!r}", "method")
        if not self.step > 0:
            raise InvalidConfig("step must be positive", "step")
        if self.step > dt_force / 10 * (1 + 1e-12):
            raise InvalidConfig(f"step {self.step} exceeds dt_force/10", "step")
        if self.duration < dt_force:
            raise InvalidConfig("duration must cover the forcing pulse", "duration")


def impulse_force(M: float, h: float, g: float = G_DEFAULT, dt_force: float = DT_FORCE_DEFAULT) -> float:
    """Constant contact force delivering the landing momentum ``M sqrt(2gh)`` over ``dt_force``."""
    _require_positive(M=M, h=h, g=g, dt_force=dt_force)
    return M * math.sqrt(2.0 * g * h) / dt_force


# ---------------------------------------------------------------------------
# Closed form
# ---------------------------------------------------------------------------

def _kernels(sigma, wn2, lam2, regime, tau):
    """Damped free-response kernels ``exp(-sigma tau) * (C, S)``.

    With ``lam2 = sigma^2 - wn2``: C = cosh(lam tau), S = sinh(lam tau)/lam
    (over-damped), their trigonometric counterparts when under-damped and
    (1, tau) at critical damping. A free response from (x0, v0) is then
    ``x = x0 EC + (v0 + sigma x0) ES``, ``v = v0 EC - (wn2 x0 + sigma v0) ES``.
    """
    if regime < 0:
        wd = np.sqrt(-lam2)
        decay = np.exp(-sigma * tau)
        return decay * np.cos(wd * tau), decay * np.sin(wd * tau) / wd
    if regime > 0:
        lam = np.sqrt(lam2)
        slow = wn2 / (sigma + lam)          # sigma - lam without cancellation
        e_slow = np.exp(-slow * tau)
        e_fast = np.exp(-(sigma + lam) * tau)
        return 0.5 * (e_slow + e_fast), -e_slow * np.expm1(-2.0 * lam * tau) / (2.0 * lam)
    decay = np.exp(-sigma * tau)
    return decay, tau * decay


def unit_response(M, k, c, dt_force, t):
    """Displacement and velocity per unit contact force.

    Parameters
    ----------
    M : float
    k, c : float or 1-D array (same length)
    dt_force : float
    t : 1-D array of times since contact

    Returns
    -------
    xu, vu : arrays of shape ``(len(k), len(t))``
        Multiply by the contact force to obtain x and x'. Samples at t < 0
        are zero (the mass is at rest before contact).
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    xu = np.zeros((len(k), len(t)))
    vu = np.zeros((len(k), len(t)))

    disc = c * c - 4.0 * M * k
    regimes = np.sign(disc).astype(int)
    forcing = (t >= 0) & (t <= dt_force)
    after = t > dt_force
    t_f = t[forcing][None, :]
    tau = (t[after] - dt_force)[None, :]

    for regime in (-1, 0, 1):
        rows = np.flatnonzero(regimes == regime)
        if len(rows) == 0:
            continue
        kk = k[rows][:, None]
        cc = c[rows][:, None]
        sigma = cc / (2.0 * M)
        wn2 = kk / M
        lam2 = disc[rows][:, None] / (4.0 * M * M)

        # constant-force phase from rest: x - F/k is a free response from (-F/k, 0)
        ec, es = _kernels(sigma, wn2, lam2, regime, t_f)
        xu[np.ix_(rows, np.flatnonzero(forcing))] = (1.0 - ec - sigma * es) / kk
        vu[np.ix_(rows, np.flatnonzero(forcing))] = es / M

        if tau.size:
            ec1, es1 = _kernels(sigma, wn2, lam2, regime, np.array([[dt_force]]))
            x1 = (1.0 - ec1 - sigma * es1) / kk
            v1 = es1 / M
            ec, es = _kernels(sigma, wn2, lam2, regime, tau)
            cols = np.flatnonzero(after)
            xu[np.ix_(rows, cols)] = x1 * ec + (v1 + sigma * x1) * es
            vu[np.ix_(rows, cols)] = v1 * ec - (wn2 * x1 + sigma * v1) * es
    return xu, vu


def unit_force_response(M, k, c, dt_force, t):
    """Transmitted force ``k x + c x'`` per unit contact force, shape ``(len(k), len(t))``."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    xu, vu = unit_response(M, k, c, dt_force, t)
    return k[:, None] * xu + c[:, None] * vu


def analytic_response(params: SmdParams, t):
    """Exact ``(x, v, F_R)`` at time(s) ``t`` after contact.

    Scalar ``t`` gives floats, array ``t`` gives arrays of the same length.
    """
    scalar = np.ndim(t) == 0
    F = params.force
    xu, vu = unit_response(params.M, params.k, params.c, params.dt_force, np.atleast_1d(t))
    x, v = F * xu[0], F * vu[0]
    fr = params.k * x + params.c * v
    if scalar:
        return float(x[0]), float(v[0]), float(fr[0])
    return x, v, fr


def sampled_response(params: SmdParams, n_samples: int, dt: float) -> np.ndarray:
    """``F_R`` at ``t = j * dt`` for ``j = 0 .. n_samples - 1``.

    Evaluated as ``F * unit_force_response`` so the values match the grid
    search bank bit for bit.
    """
    t = np.arange(n_samples) * dt
    return params.force * unit_force_response(params.M, params.k, params.c, params.dt_force, t)[0]


# ---------------------------------------------------------------------------
# Numerical integration
# ---------------------------------------------------------------------------

def _rk4_step(x, v, h, M, k, c, F):
    def acc(xx, vv):
        return (F - k * xx - c * vv) / M

    k1x, k1v = v, acc(x, v)
    k2x, k2v = v + 0.5 * h * k1v, acc(x + 0.5 * h * k1x, v + 0.5 * h * k1v)
    k3x, k3v = v + 0.5 * h * k2v, acc(x + 0.5 * h * k2x, v + 0.5 * h * k2v)
    k4x, k4v = v + h * k3v, acc(x + h * k3x, v + h * k3v)
    x = x + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
    v = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return x, v


def integrate_states(params: SmdParams, solver: SolverConfig | None = None):
    """RK4 trajectory on the solver grid; returns ``(t, x, v)`` arrays.

    The step straddling the end of the pulse is split at ``dt_force`` so the
    force discontinuity never falls inside an RK4 stage.
    """
    solver = solver or SolverConfig()
    solver.validate(params.dt_force)
    M, k, c, tf = params.M, params.k, params.c, params.dt_force
    F = params.force
    h = solver.step
    n = int(round(solver.duration / h)) + 1
    xs = np.empty(n)
    vs = np.empty(n)
    x = v = 0.0
    xs[0] = vs[0] = 0.0
    for i in range(1, n):
        t0, t1 = (i - 1) * h, i * h
        if t1 <= tf + 1e-12 * h:
            x, v = _rk4_step(x, v, h, M, k, c, F)
        elif t0 >= tf - 1e-12 * h:
            x, v = _rk4_step(x, v, h, M, k, c, 0.0)
        else:
            x, v = _rk4_step(x, v, tf - t0, M, k, c, F)
            x, v = _rk4_step(x, v, t1 - tf, M, k, c, 0.0)
        xs[i], vs[i] = x, v
    if not (np.isfinite(xs).all() and np.isfinite(vs).all()):
        raise UnstableIntegration("non-finite state during integration")
    return np.arange(n) * h, xs, vs


def simulate_response(params: SmdParams, solver: SolverConfig | None = None) -> TimeSeries:
    """Transmitted force ``F_R(t)`` integrated with fixed-step RK4."""
    solver = solver or SolverConfig()
    _, x, v = integrate_states(params, solver)
    return TimeSeries(params.k * x + params.c * v, dt=solver.step, t_origin=0.0, units="N")


def resample(series: TimeSeries, target_dt: float) -> TimeSeries:
    """Linear interpolation onto a coarser grid starting at the same origin."""
    if target_dt < series.dt * (1 - 1e-12):
        raise UpsamplingRequested(
            f"target dt {target_dt} is finer than source dt {series.dt}", "target_dt")
    span = (len(series) - 1) * series.dt
    n = int(math.floor(span / target_dt * (1 + 1e-12))) + 1
    t_new = np.arange(n) * target_dt
    t_old = np.arange(len(series)) * series.dt
    values = np.interp(t_new, t_old, series.values)
    return TimeSeries(values, dt=target_dt, t_origin=series.t_origin, units=series.units)
