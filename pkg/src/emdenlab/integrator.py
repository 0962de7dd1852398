"""Adaptive Dormand-Prince 5(4) integrator with dense output.

The integrator advances a first-order system ``y' = rhs(t, y)`` and watches a
positivity event on the first ``n_watch`` components (the scale factors). When
one of them drops below a threshold the crossing is located by bisection on
the continuous extension and then tightened by re-integrating the last step
with a shortened step size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Union

import numpy as np

from .errors import InputError

# Dormand & Prince (1980) tableau, FSAL form.
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# difference between the 5th and embedded 4th order weights (7 stages incl. FSAL)
E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# continuous extension: y(t + th*h) = y + h * (K.T @ P) @ [th, th^2, th^3, th^4]
P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
ERROR_EXPONENT = -1.0 / 5.0


@dataclass(frozen=True)
class Tolerance:
    rel: float = 1e-10
    abs: float = 1e-12

    def __post_init__(self):
        if not (self.rel > 0.0 and self.abs > 0.0) or not (
                math.isfinite(self.rel) and math.isfinite(self.abs)):
            raise InputError(f"tolerances must be positive and finite, got {self}")


@dataclass(frozen=True)
class ReachedEnd:
    t_end: float
    kind = "reached_end"

    @property
    def t(self) -> float:
        return self.t_end


@dataclass(frozen=True)
class Touchdown:
    axis: int
    t_event: float
    y_event: np.ndarray = field(repr=False)
    kind = "touchdown"

    @property
    def t(self) -> float:
        return self.t_event


@dataclass(frozen=True)
class StepFailure:
    t_fail: float
    reason: str
    kind = "step_failure"

    @property
    def t(self) -> float:
        return self.t_fail


Termination = Union[ReachedEnd, Touchdown, StepFailure]


@dataclass
class StepStats:
    accepted: int = 0
    rejected: int = 0
    nfev: int = 0


@dataclass
class Solution:
    """Raw integrator output: accepted nodes plus per-step interpolants."""

    ts: np.ndarray
    ys: np.ndarray
    dense: List[np.ndarray]
    termination: Termination
    stats: StepStats

    def __call__(self, t: float) -> np.ndarray:
        """Evaluate the continuous extension at ``t`` in ``[ts[0], ts[-1]]``."""
        t0, t1 = self.ts[0], self.ts[-1]
        if not (t0 <= t <= t1):
            raise InputError(f"t={t} outside integrated range [{t0}, {t1}]")
        if len(self.dense) == 0:
            return self.ys[0].copy()
        idx = int(np.searchsorted(self.ts, t, side="right")) - 1
        idx = min(max(idx, 0), len(self.dense) - 1)
        h = self.ts[idx + 1] - self.ts[idx]
        theta = (t - self.ts[idx]) / h
        return _interpolate(self.ys[idx], h, self.dense[idx], theta)


def _interpolate(y_old, h, Q, theta):
    powers = theta ** np.arange(1, 5)
    return y_old + h * (Q @ powers)


def _rk_step(rhs, t, y, f, h):
    """One Dormand-Prince step. Returns (y_new, f_new, K) with K of shape (7, n)."""
    n = y.size
    K = np.empty((7, n))
    K[0] = f
    for s in range(1, 6):
        dy = np.dot(K[:s].T, A[s]) * h
        K[s] = rhs(t + C[s] * h, y + dy)
    y_new = y + h * np.dot(K[:6].T, B)
    f_new = rhs(t + h, y_new)
    K[6] = f_new
    return y_new, f_new, K


def _initial_step(rhs, t0, y0, f0, direction_span, tol: Tolerance):
    scale = tol.abs + np.abs(y0) * tol.rel
    d0 = _rms(y0 / scale)
    d1 = _rms(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, direction_span)
    y1 = y0 + h0 * f0
    try:
        f1 = rhs(t0 + h0, y1)
        d2 = _rms((f1 - f0) / scale) / h0
    except (ValueError, ArithmeticError):
        return h0 * 1e-3
    if not np.isfinite(d2):
        return h0 * 1e-3
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 5.0)
    return min(100 * h0, h1, direction_span)


def _rms(x):
    return float(np.sqrt(np.mean(x * x)))


def solve(rhs: Callable[[float, np.ndarray], np.ndarray], t0: float, y0, t_end: float,
          tol: Tolerance = Tolerance(), *, n_watch: int = 0,
          threshold: Optional[np.ndarray] = None, max_step: float = math.inf,
          min_step_fraction: float = 1e-14, max_steps: int = 1_000_000,
          event_rtol: float = 1e-12) -> Solution:
    """Integrate from ``t0`` to ``t_end``.

    ``rhs`` may raise ``ValueError``/``ArithmeticError`` (or return non-finite
    values) for inadmissible trial states; such trial steps are rejected and
    the step size is reduced. When ``n_watch > 0`` the integration stops the
    first time ``y[i] < threshold[i]`` for some ``i < n_watch``.
    """
    if not t_end > t0:
        raise InputError(f"t_end={t_end} must exceed t0={t0}")
    y = np.array(y0, dtype=float)
    span = t_end - t0
    h_min = min_step_fraction * span
    stats = StepStats()
    threshold = None if n_watch == 0 else np.broadcast_to(
        np.asarray(threshold, dtype=float), (n_watch,))

    def call(t, yy):
        stats.nfev += 1
        out = rhs(t, yy)
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("non-finite right-hand side")
        return out

    ts = [t0]
    ys = [y.copy()]
    dense: List[np.ndarray] = []
    t = t0
    f = call(t, y)
    h = min(_initial_step(call, t0, y, f, span, tol), max_step)
    termination: Optional[Termination] = None

    while termination is None:
        if stats.accepted + stats.rejected >= max_steps:
            termination = StepFailure(t, f"exceeded {max_steps} steps")
            break
        h = min(h, max_step, t_end - t)
        last = (t + h) >= t_end
        if h < h_min and not last:
            termination = StepFailure(t, f"step size {h:.3e} below floor {h_min:.3e}")
            break
        try:
            y_new, f_new, K = _rk_step(call, t, y, f, h)
            err_vec = h * np.dot(K.T, E)
            scale = tol.abs + np.maximum(np.abs(y), np.abs(y_new)) * tol.rel
            err = _rms(err_vec / scale)
            ok = np.isfinite(err)
        except (ValueError, ArithmeticError):
            ok = False
        if not ok:
            stats.rejected += 1
            h *= 0.25
            continue
        if err > 1.0:
            stats.rejected += 1
            h *= max(MIN_FACTOR, SAFETY * err ** ERROR_EXPONENT)
            continue

        t_new = t_end if last else t + h
        Q = np.dot(K.T, P)
        stats.accepted += 1

        if n_watch and np.any(y_new[:n_watch] < threshold):
            termination = _locate_touchdown(call, t, y, f, h, Q, y_new, n_watch,
                                            threshold, event_rtol)
            break

        ts.append(t_new)
        ys.append(y_new)
        dense.append(Q)
        t, y, f = t_new, y_new, f_new
        if last:
            termination = ReachedEnd(t_end)
            break
        factor = MAX_FACTOR if err == 0.0 else min(MAX_FACTOR, SAFETY * err ** ERROR_EXPONENT)
        h *= factor

    return Solution(np.array(ts), np.array(ys), dense, termination, stats)


def _locate_touchdown(call, t, y, f, h, Q, y_new, n_watch, threshold, event_rtol):
    """First crossing of ``y[i] = threshold[i]`` inside the accepted step [t, t+h]."""
    best_theta, best_axis = math.inf, -1
    for i in np.flatnonzero(y_new[:n_watch] < threshold):
        lo, hi = 0.0, 1.0
        # bisection on theta in [0, 1]; stop at the requested relative time accuracy
        while (hi - lo) * h > event_rtol * max(1.0, abs(t + h)):
            mid = 0.5 * (lo + hi)
            if _interpolate(y, h, Q, mid)[i] < threshold[i]:
                hi = mid
            else:
                lo = mid
        if hi < best_theta:
            best_theta, best_axis = hi, int(i)

    # tighten with genuine RK steps from the last accepted node (secant on the step length)
    i = best_axis
    h_est = best_theta * h
    y_est = _interpolate(y, h, Q, best_theta)

    def g(step):
        return _rk_step(call, t, y, f, step)[0]

    try:
        h0, h1 = h_est, h_est * (1.0 - 1e-6)
        y0_, y1_ = g(h0), g(h1)
        g0, g1 = y0_[i] - threshold[i], y1_[i] - threshold[i]
        for _ in range(20):
            if g1 == g0 or abs(g1) <= 1e-15 * max(1.0, threshold[i]):
                break
            h2 = h1 - g1 * (h1 - h0) / (g1 - g0)
            if not (0.0 < h2 <= h):
                break
            h0, g0 = h1, g1
            h1 = h2
            y1_ = g(h1)
            g1 = y1_[i] - threshold[i]
            if abs(h1 - h0) <= event_rtol * max(1.0, abs(t + h1)):
                break
        if abs(g1) < abs(y_est[i] - threshold[i]) and np.all(np.isfinite(y1_)):
            h_est, y_est = h1, y1_
    except (ValueError, ArithmeticError):
        pass
    return Touchdown(i, t + h_est, y_est)
