"""Pointwise residuals of the compressible flow equations for the exact fields.

Mass:      rho_t + div(rho u) = 0
Momentum:  rho (u_t + (u . grad) u) + K grad(rho**gamma) - mu Lap(u) = 0

Closed-form residuals combine analytic derivatives term by term (nothing is
simplified symbolically, so what remains is genuine rounding). Finite
difference residuals use central differences of the fields evaluated from a
high-accuracy Emden trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .emden import Trajectory, _accel, integrate
from .errors import BoundaryError, InputError
from .integrator import Tolerance
from .params import EmdenState, ModelParams
from .profile import EDGE_FRACTION, f_eval, f_prime, fields, s_limit, s_variable


@dataclass(frozen=True)
class ResidualReport:
    t: float
    x: np.ndarray
    mass_residual: float
    momentum_residual: np.ndarray
    method: str
    h: Optional[float] = None
    in_support_interior: bool = True
    mass_scale: float = 1.0
    momentum_scale: Optional[np.ndarray] = None


def _require_interior(s, params: ModelParams, edge_fraction: float) -> None:
    s_max = s_limit(params)
    if s_max is not None and np.max(s) > edge_fraction * s_max:
        raise BoundaryError(
            f"s={np.max(s):.6g} exceeds {edge_fraction} * s_max={s_max:.6g}: "
            "too close to the vacuum boundary")


def _terms(state: EmdenState, x, params: ModelParams, edge_fraction: float):
    state.check_params(params)
    x = np.asarray(x, dtype=float)
    if x.shape != (params.N,):
        raise InputError(f"position must have shape ({params.N},), got {x.shape}")
    s = s_variable(state, x, params)
    _require_interior(s, params, edge_fraction)
    a, a_dot = state.a, state.a_dot
    prod_a = float(np.prod(a))
    f = f_eval(s, params)
    fp = f_prime(s, params)
    y = x + params.d
    rate = a_dot / a
    rho = f / prod_a
    ds_dt = -2.0 * np.sum(y * y * a_dot / a ** 3)
    ds_dx = 2.0 * y / a ** 2
    return dict(s=s, y=y, rate=rate, f=f, fp=fp, prod_a=prod_a, rho=rho,
                ds_dt=ds_dt, ds_dx=ds_dx)


def mass_scale(state: EmdenState, x, params: ModelParams) -> float:
    rho = f_eval(s_variable(state, x, params), params) / float(np.prod(state.a))
    return abs(rho) * float(np.max(np.abs(state.a_dot / state.a))) + 1.0


def residual_mass_exact(state: EmdenState, x, params: ModelParams,
                        edge_fraction: float = EDGE_FRACTION) -> float:
    """``rho_t + grad(rho) . u + rho div(u)`` from analytic derivatives."""
    T = _terms(state, x, params, edge_fraction)
    rho, rate, y = T["rho"], T["rate"], T["y"]
    rho_t = T["fp"] * T["ds_dt"] / T["prod_a"] - rho * np.sum(rate)
    grad_rho = T["fp"] * T["ds_dx"] / T["prod_a"]
    u = rate * y
    div_u = np.sum(rate)
    return float(rho_t + np.dot(grad_rho, u) + rho * div_u)


def _momentum_terms(state, accel, x, params, edge_fraction, check):
    T = _terms(state, x, params, edge_fraction)
    accel = np.asarray(accel, dtype=float)
    if accel.shape != (params.N,):
        raise InputError(f"acceleration must have shape ({params.N},)")
    if check:
        expected = _accel(state.a, params)
        if not np.allclose(accel, expected, rtol=1e-12, atol=1e-14):
            raise InputError(
                f"acceleration {accel} is inconsistent with the Emden system ({expected})")
    a, a_dot, y, rate, rho = state.a, state.a_dot, T["y"], T["rate"], T["rho"]
    u = rate * y
    du_dt = (accel / a - (a_dot / a) ** 2) * y
    jac = np.diag(rate)  # du_i/dx_k
    advect = jac @ u
    gamma = params.gamma
    # d/dx_i rho^gamma = gamma f^(gamma-1) f' ds/dx_i / prod(a)^gamma
    dp = params.K * gamma * T["f"] ** (gamma - 1.0) * T["fp"] * T["ds_dx"] / T["prod_a"] ** gamma
    lap_u = np.zeros(params.N)  # u_i is affine in x
    inertia = rho * du_dt
    convect = rho * advect
    viscous = params.mu * lap_u
    return inertia, convect, dp, viscous


def residual_momentum_exact(state: EmdenState, accel, x, params: ModelParams,
                            edge_fraction: float = EDGE_FRACTION,
                            check: bool = True) -> np.ndarray:
    """Momentum residual per component.

    ``accel`` must be the Emden acceleration for ``state``; pass
    ``check=False`` to evaluate deliberately inconsistent accelerations.
    """
    inertia, convect, dp, viscous = _momentum_terms(state, accel, x, params,
                                                    edge_fraction, check)
    return (inertia + convect) + dp - viscous


def momentum_scale(state: EmdenState, accel, x, params: ModelParams,
                   edge_fraction: float = EDGE_FRACTION) -> np.ndarray:
    """``1 + sum of |terms|`` per component, the natural rounding scale."""
    inertia, convect, dp, viscous = _momentum_terms(state, accel, x, params,
                                                    edge_fraction, False)
    return 1.0 + np.abs(inertia) + np.abs(convect) + np.abs(dp) + np.abs(viscous)


def residual_exact(state: EmdenState, x, params: ModelParams,
                   edge_fraction: float = EDGE_FRACTION) -> ResidualReport:
    accel = _accel(state.a, params)
    x = np.asarray(x, dtype=float)
    return ResidualReport(
        t=state.t, x=x.copy(),
        mass_residual=residual_mass_exact(state, x, params, edge_fraction),
        momentum_residual=residual_momentum_exact(state, accel, x, params, edge_fraction),
        method="closed_form",
        mass_scale=mass_scale(state, x, params),
        momentum_scale=momentum_scale(state, accel, x, params, edge_fraction),
    )


class ExactField:
    """Density and velocity at arbitrary ``(t, x)`` along one Emden trajectory.

    Scale factors at intermediate times come from the dense output of a
    single tight-tolerance integration.
    """

    def __init__(self, params: ModelParams, init: EmdenState, t_end: float,
                 tol: Tolerance = Tolerance(1e-13, 1e-15), max_step: float = math.inf):
        self.params = params
        self.trajectory: Trajectory = integrate(params, init, t_end, tol, max_step=max_step)
        if self.trajectory.termination.kind != "reached_end":
            raise InputError(
                f"trajectory ended early ({self.trajectory.termination}); shorten t_end")

    @classmethod
    def from_trajectory(cls, trajectory: Trajectory) -> "ExactField":
        obj = cls.__new__(cls)
        obj.params = trajectory.params
        obj.trajectory = trajectory
        return obj

    @property
    def t_range(self) -> Tuple[float, float]:
        return self.trajectory.t_first, self.trajectory.t_last

    def state(self, t: float) -> EmdenState:
        return self.trajectory.state_at(t)

    def __call__(self, t: float, x):
        """``(rho, u, s)`` at time ``t``; ``x`` may be batched ``(..., N)``."""
        return fields(self.state(t), x, self.params)


def residual_fd(field: ExactField, t: float, x, h: float, params: ModelParams,
                h_t: Optional[float] = None,
                edge_fraction: float = EDGE_FRACTION) -> ResidualReport:
    """Second-order central-difference residuals at ``(t, x)``."""
    x = np.asarray(x, dtype=float)
    N = params.N
    if x.shape != (N,):
        raise InputError(f"position must have shape ({N},)")
    if not h > 0.0:
        raise InputError("h must be positive")
    h_t = h if h_t is None else h_t
    t_lo, t_hi = field.t_range
    if not (t_lo <= t - h_t and t + h_t <= t_hi):
        raise InputError(f"time stencil [{t - h_t}, {t + h_t}] outside trajectory range")

    shifts = np.vstack([np.zeros(N), h * np.eye(N), -h * np.eye(N)])
    pts = x + shifts  # centre, +e_k, -e_k
    rho_c, u_c, s_c = field(t, pts)
    _require_interior(s_c, params, edge_fraction)
    rho_p, u_p, s_p = field(t + h_t, x)
    rho_m, u_m, s_m = field(t - h_t, x)
    _require_interior(np.array([s_p, s_m]), params, edge_fraction)

    rho0, u0 = rho_c[0], u_c[0]
    plus, minus = slice(1, N + 1), slice(N + 1, 2 * N + 1)
    idx = np.arange(N)

    mom_flux = rho_c[:, None] * u_c
    mass = (rho_p - rho_m) / (2 * h_t) + np.sum(
        (mom_flux[plus][idx, idx] - mom_flux[minus][idx, idx]) / (2 * h))

    du_dt = (u_p - u_m) / (2 * h_t)
    # du_i/dx_k along row k
    du_dx = (u_c[plus] - u_c[minus]) / (2 * h)
    advect = u0 @ du_dx
    pressure = params.K * rho_c ** params.gamma
    dp = (pressure[plus] - pressure[minus]) / (2 * h)
    lap_u = np.sum(u_c[plus] - 2.0 * u0 + u_c[minus], axis=0) / h ** 2
    momentum = rho0 * (du_dt + advect) + dp - params.mu * lap_u
    return ResidualReport(t=t, x=x.copy(), mass_residual=float(mass),
                          momentum_residual=momentum, method="finite_difference", h=h)


@dataclass(frozen=True)
class OrderFit:
    """Least-squares fit ``log r = log C + p log h``.

    ``exact`` is set (with ``order = inf``) when some residual is exactly zero.
    """

    order: float
    constant: float
    exact: bool = False

    def __float__(self):
        return self.order


def convergence_order(pairs: Sequence[Tuple[float, float]]) -> OrderFit:
    pairs = [(float(h), float(r)) for h, r in pairs]
    if len(pairs) < 3:
        raise InputError("at least three (h, residual) pairs are required")
    hs = np.array([p[0] for p in pairs])
    rs = np.abs(np.array([p[1] for p in pairs]))
    if np.any(hs <= 0.0) or np.any(np.diff(hs) >= 0.0):
        raise InputError("step sizes must be positive and strictly decreasing")
    if np.any(rs <= 0.0):
        return OrderFit(math.inf, 0.0, exact=True)
    slope, intercept = np.polyfit(np.log(hs), np.log(rs), 1)
    return OrderFit(float(slope), float(math.exp(intercept)))


def fd_sweep(field: ExactField, t: float, x, params: ModelParams,
             h0: float = 1e-2, halvings: int = 4):
    """FD residuals at ``h0, h0/2, ...`` and fitted orders per equation.

    Returns ``(reports, mass_fit, momentum_fits)``.
    """
    reports = [residual_fd(field, t, x, h0 / 2 ** k, params) for k in range(halvings + 1)]
    mass_fit = convergence_order([(r.h, r.mass_residual) for r in reports])
    mom_fits = [convergence_order([(r.h, r.momentum_residual[i]) for r in reports])
                for i in range(params.N)]
    return reports, mass_fit, mom_fits
