"""The N-dimensional Emden system for the scale factors.

    a_i'' = xi / (a_i * prod(a)**(gamma - 1)),   a_i(0) = a_i0 > 0,  a_i'(0) = a_i1

Integration, conserved energies, touchdown (blowup) detection and the
classification of trajectories into the global/blowup regimes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy import integrate as sp_integrate

from .errors import DomainError, InputError, UnsupportedRegimeError
from .integrator import (ReachedEnd, Solution, StepFailure, StepStats, Termination,
                         Tolerance, Touchdown, solve)
from .params import EmdenState, ModelParams

#: Relative touchdown threshold: the event fires when a_i < TOUCH_FRACTION * min(a0).
TOUCH_FRACTION = 1e-8


def _check_positive(a):
    if np.any(a <= 0.0):
        raise DomainError(f"Emden right-hand side is singular for nonpositive scale factors {a}")


def emden_rhs(state: EmdenState, params: ModelParams) -> np.ndarray:
    """Accelerations of the scale factors."""
    state.check_params(params)
    return _accel(state.a, params)


def _accel(a: np.ndarray, params: ModelParams) -> np.ndarray:
    _check_positive(a)
    if params.gamma == 1.0:
        return params.xi / a
    with np.errstate(over="raise", divide="raise", invalid="raise"):
        return params.xi / (a * np.prod(a) ** (params.gamma - 1.0))


def scalar_emden_rhs(a: float, params: ModelParams) -> float:
    """Radial reduction: ``xi / a**(N (gamma - 1) + 1)`` for equal scale factors."""
    if a <= 0.0:
        raise DomainError(f"scalar Emden right-hand side is singular at a={a}")
    return params.xi / a ** (params.N * (params.gamma - 1.0) + 1.0)


def energy(state: EmdenState, params: ModelParams):
    """Conserved energy.

    For ``gamma > 1`` a scalar ``0.5 |a_dot|^2 + xi/(gamma-1) * prod(a)**(1-gamma)``;
    for ``gamma = 1`` the system decouples and each axis conserves
    ``0.5 a_dot_i^2 - xi ln a_i`` (returned as an array).
    """
    state.check_params(params)
    return _energy(state.a, state.a_dot, params)


def _energy(a, a_dot, params: ModelParams):
    _check_positive(a)
    if params.gamma == 1.0:
        return 0.5 * a_dot * a_dot - params.xi * np.log(a)
    kinetic = 0.5 * float(np.dot(a_dot, a_dot))
    return kinetic + params.xi / (params.gamma - 1.0) * float(np.prod(a)) ** (1.0 - params.gamma)


@dataclass
class Trajectory:
    """Accepted states of one Emden integration plus its termination record."""

    params: ModelParams
    solution: Solution
    threshold: np.ndarray

    @property
    def termination(self) -> Termination:
        return self.solution.termination

    @property
    def stats(self) -> StepStats:
        return self.solution.stats

    @property
    def t(self) -> np.ndarray:
        return self.solution.ts

    @property
    def a(self) -> np.ndarray:
        return self.solution.ys[:, :self.params.N]

    @property
    def a_dot(self) -> np.ndarray:
        return self.solution.ys[:, self.params.N:]

    @property
    def samples(self) -> List[EmdenState]:
        N = self.params.N
        return [EmdenState(t, y[:N], y[N:]) for t, y in zip(self.solution.ts, self.solution.ys)]

    @property
    def t_first(self) -> float:
        return float(self.solution.ts[0])

    @property
    def t_last(self) -> float:
        return float(self.solution.ts[-1])

    @property
    def touched_down(self) -> bool:
        return isinstance(self.termination, Touchdown)

    def state_at(self, t: float) -> EmdenState:
        """Dense-output state at any time in ``[t_first, t_last]``."""
        y = self.solution(t)
        N = self.params.N
        return EmdenState(t, y[:N], y[N:])

    def final_state(self) -> EmdenState:
        N = self.params.N
        y = self.solution.ys[-1]
        return EmdenState(self.t_last, y[:N], y[N:])

    def energies(self) -> np.ndarray:
        """Energy at each sample: shape (M,) for gamma > 1, (M, N) for gamma = 1."""
        return np.array([_energy(a, ad, self.params) for a, ad in zip(self.a, self.a_dot)])


def integrate(params: ModelParams, init: EmdenState, t_end: float,
              tol: Tolerance = Tolerance(), *, touch_fraction: float = TOUCH_FRACTION,
              detect_touchdown: bool = True, max_step: float = math.inf,
              max_steps: int = 1_000_000) -> Trajectory:
    """Advance the Emden system from ``init`` to ``t_end``.

    Stops early with a :class:`Touchdown` record when a scale factor drops
    below ``touch_fraction * min(a0)``, or with :class:`StepFailure` when the
    step size collapses below ``1e-14 * (t_end - t0)``.
    """
    init.check_params(params)
    if not isinstance(tol, Tolerance):
        tol = Tolerance(*tol)
    if not t_end > init.t:
        raise InputError(f"t_end={t_end} must exceed the initial time {init.t}")
    N = params.N
    threshold = np.full(N, touch_fraction * float(np.min(init.a)))

    def rhs(t, y):
        return np.concatenate((y[N:], _accel(y[:N], params)))

    y0 = np.concatenate((init.a, init.a_dot))
    sol = solve(rhs, init.t, y0, t_end, tol, n_watch=N if detect_touchdown else 0,
                threshold=threshold, max_step=max_step, max_steps=max_steps)
    return Trajectory(params, sol, threshold)


def integrate_radial(params: ModelParams, a0: float, a1: float, t_eval,
                     rtol: float = 1e-12, atol: float = 1e-14) -> np.ndarray:
    """Reference solution of the scalar (radially symmetric) Emden equation.

    Uses SciPy's DOP853, i.e. a different method and code path than
    :func:`integrate`; returns ``(a, a_dot)`` at ``t_eval`` (shape (2, M)).
    """
    exponent = params.N * (params.gamma - 1.0) + 1.0
    xi = params.xi
    t_eval = np.asarray(t_eval, dtype=float)

    def rhs(t, y):
        return [y[1], xi / y[0] ** exponent]

    t0 = float(t_eval[0])
    res = sp_integrate.solve_ivp(rhs, (t0, float(t_eval[-1])), [a0, a1], method="DOP853",
                                 t_eval=t_eval, rtol=rtol, atol=atol)
    if not res.success:
        raise RuntimeError(f"radial reference integration failed: {res.message}")
    return res.y


def touchdown_time_quadrature(params: ModelParams, a0: float, a1: float) -> float:
    """Exact touchdown time of ``a'' = xi / a`` (isothermal case, xi < 0).

    Energy conservation gives ``a'^2 = 2 (E + xi ln a)``. Writing
    ``a = a_max exp(-w^2)`` with ``a_max = exp(-E / xi)`` turns each phase into
    ``a_max * sqrt(2/|xi|) * int exp(-w^2) dw``, which has no endpoint
    singularity; the integrals are evaluated adaptively.
    """
    if params.gamma != 1.0:
        raise UnsupportedRegimeError("touchdown quadrature is only available for gamma = 1")
    if params.xi >= 0.0:
        raise UnsupportedRegimeError(f"no touchdown for xi={params.xi} >= 0")
    if a0 <= 0.0:
        raise DomainError("a0 must be positive")
    xi = params.xi
    e = 0.5 * a1 * a1 - xi * math.log(a0)
    a_max = math.exp(-e / xi)
    w0 = abs(a1) / math.sqrt(2.0 * abs(xi))
    scale = a_max * math.sqrt(2.0 / abs(xi))

    def gauss(w):
        return math.exp(-w * w)

    fall_from_top, _ = sp_integrate.quad(gauss, 0.0, math.inf, epsabs=1e-15, epsrel=1e-13)
    partial, _ = sp_integrate.quad(gauss, 0.0, w0, epsabs=1e-15, epsrel=1e-13)
    if a1 >= 0.0:
        return scale * (fall_from_top + partial)
    return scale * (fall_from_top - partial)


# ---------------------------------------------------------------------------
# classification

GLOBAL_BY_THEOREM = "global_by_theorem"
BLOWUP_BY_THEOREM = "blowup_by_theorem"
NUMERICAL_BLOWUP = "numerical_blowup"
NUMERICAL_GLOBAL = "numerical_global"
UNDETERMINED = "undetermined"
FREE_GLOBAL = "free_motion_global"
FREE_BLOWUP = "free_motion_blowup"


@dataclass
class Classification:
    """Verdict on global existence versus finite-time blowup.

    ``case`` is one of ``"1a", "1b", "2a", "2b"`` for theorem-backed verdicts
    and None otherwise. ``t_est`` holds an observed (or exact, for free
    motion) touchdown time; ``from_step_failure`` marks conservative estimates
    taken from a collapsed step size rather than a located event.
    """

    verdict: str
    case: Optional[str] = None
    bound_T: Optional[float] = None
    t_est: Optional[float] = None
    t_horizon: Optional[float] = None
    from_step_failure: bool = False
    trajectory: Optional[Trajectory] = None

    @property
    def blows_up(self) -> bool:
        return self.verdict in (BLOWUP_BY_THEOREM, NUMERICAL_BLOWUP, FREE_BLOWUP)


def blowup_bound(init: EmdenState) -> Optional[float]:
    """Linear-comparison bound ``min(-a_i0 / a_i1 : a_i1 < 0)``; None if no a_i1 < 0."""
    neg = init.a_dot < 0.0
    if not np.any(neg):
        return None
    return float(np.min(-init.a[neg] / init.a_dot[neg]))


def classify(params: ModelParams, init: EmdenState, horizon: float,
             tol: Tolerance = Tolerance()) -> Classification:
    """Classify the solution started from ``init``.

    Theorem-backed verdicts are returned only inside the hypotheses of the
    global/blowup cases; other regimes are integrated to ``horizon`` and get a
    heuristic numerical verdict.
    """
    init.check_params(params)
    if not horizon > 0.0:
        raise InputError(f"horizon must be positive, got {horizon}")
    xi, gamma = params.xi, params.gamma

    if xi == 0.0:
        # straight-line motion a_i(t) = a_i0 + a_i1 t; not covered by the theorem
        T = blowup_bound(init)
        if T is None:
            return Classification(FREE_GLOBAL)
        return Classification(FREE_BLOWUP, t_est=init.t + T)

    if gamma == 1.0:
        if xi > 0.0:
            return Classification(GLOBAL_BY_THEOREM, case="1b")
        t_est = init.t + min(touchdown_time_quadrature(params, a0, a1)
                             for a0, a1 in zip(init.a, init.a_dot))
        return Classification(BLOWUP_BY_THEOREM, case="1a", t_est=t_est)

    T = blowup_bound(init)
    if xi < 0.0 and T is not None:
        traj = integrate(params, init, init.t + T, tol)
        term = traj.termination
        if isinstance(term, Touchdown):
            t_est, flagged = term.t_event, False
        elif isinstance(term, StepFailure):
            t_est, flagged = term.t_fail, True
        else:
            raise AssertionError(
                f"confirming integration reached T={T} without touchdown; "
                "the comparison bound is violated")
        if not (init.t < t_est <= init.t + T):
            raise AssertionError(f"observed touchdown {t_est} outside (t0, t0 + {T}]")
        return Classification(BLOWUP_BY_THEOREM, case="2a", bound_T=T, t_est=t_est,
                              from_step_failure=flagged, trajectory=traj)
    if xi > 0.0 and T is None:
        return Classification(GLOBAL_BY_THEOREM, case="2b")
    return _numerical_verdict(params, init, horizon, tol)


def _numerical_verdict(params, init, horizon, tol) -> Classification:
    traj = integrate(params, init, init.t + horizon, tol)
    term = traj.termination
    if isinstance(term, Touchdown):
        return Classification(NUMERICAL_BLOWUP, t_est=term.t_event, trajectory=traj)
    if isinstance(term, StepFailure):
        return Classification(NUMERICAL_BLOWUP, t_est=term.t_fail, from_step_failure=True,
                              trajectory=traj)
    end = traj.final_state()
    expanding = bool(np.all(end.a_dot >= 0.0))
    if params.xi > 0.0 and expanding:
        # from here on the repulsive case with nonnegative rates applies
        return Classification(NUMERICAL_GLOBAL, t_horizon=end.t, trajectory=traj)
    if params.xi < 0.0 and expanding and _energy(end.a, end.a_dot, params) > 0.0:
        return Classification(NUMERICAL_GLOBAL, t_horizon=end.t, trajectory=traj)
    return Classification(UNDETERMINED, t_horizon=end.t, trajectory=traj)


__all__ = [
    "Classification", "ReachedEnd", "StepFailure", "Tolerance", "Touchdown", "Trajectory",
    "blowup_bound", "classify", "emden_rhs", "energy", "integrate", "integrate_radial",
    "scalar_emden_rhs", "touchdown_time_quadrature",
]
