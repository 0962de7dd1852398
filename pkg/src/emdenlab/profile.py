"""Self-similar profile, exact fields, support geometry and total mass.

The density is ``f(s) / prod(a)`` and the velocity is affine in each axis,
``u_i = (a_dot_i / a_i) * (x_i + d_i)``, with the elliptic coordinate

    s = sum_k (x_k + d_k)**2 / a_k**2.

For ``gamma > 1`` the amplitude enters inside the power, so
``f(0) = alpha ** (1 / (gamma - 1))``; only the isothermal branch has
``f(0) = alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from .errors import BoundaryError, InputError, UnsupportedRegimeError
from .params import EmdenState, ModelParams

#: Default interior margin: pointwise identities are checked for s <= EDGE_FRACTION * s_max.
EDGE_FRACTION = 0.99


@dataclass(frozen=True)
class FieldSample:
    x: np.ndarray
    rho: float
    u: np.ndarray
    s: float


@dataclass(frozen=True)
class SupportGeometry:
    bounded: bool
    s_max: Optional[float]
    semi_axes: Optional[np.ndarray]
    center: np.ndarray


@dataclass(frozen=True)
class MassQuadrature:
    """Tensor-product quadrature over the (possibly truncated) support box.

    ``nodes`` defaults to 256 per axis for N <= 2, 64 for N = 3 and 24 beyond.
    ``tail_exponent`` sets the truncation of unbounded (Gaussian) profiles:
    the box covers ``s <= tail_exponent / (xi / 2K)``.
    ``rule`` is ``"midpoint"`` or ``"gauss"`` (Gauss-Legendre).
    """

    nodes: Optional[int] = None
    rule: str = "midpoint"
    tail_exponent: float = 40.0

    def nodes_for(self, N: int) -> int:
        if self.nodes is not None:
            return int(self.nodes)
        return 256 if N <= 2 else (64 if N == 3 else 24)


def _position(x, params: ModelParams) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (params.N,):
        raise InputError(f"position must have trailing dimension N={params.N}, got shape {x.shape}")
    return x


def s_variable(state: EmdenState, x, params: ModelParams):
    """Elliptic self-similar coordinate; ``x`` may carry leading batch axes."""
    state.check_params(params)
    x = _position(x, params)
    y = (x + params.d) / state.a
    s = np.sum(y * y, axis=-1)
    return float(s) if s.ndim == 0 else s


def _inner_slope(params: ModelParams) -> float:
    # d/ds of the base (-xi (gamma-1) / (2 K gamma)) s + alpha
    return -params.xi * (params.gamma - 1.0) / (2.0 * params.K * params.gamma)


def f_eval(s, params: ModelParams):
    """Profile ``f(s)``; nonnegative and continuous on ``s >= 0``."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0.0) or not np.all(np.isfinite(s_arr)):
        raise InputError("s must be finite and nonnegative")
    if params.isothermal:
        out = params.alpha * np.exp(-params.xi * s_arr / (2.0 * params.K))
    else:
        base = _inner_slope(params) * s_arr + params.alpha
        positive = base > 0.0
        out = np.zeros_like(s_arr)
        out[positive] = base[positive] ** (1.0 / (params.gamma - 1.0))
    return float(out) if out.ndim == 0 else out


def f_prime(s, params: ModelParams):
    """Analytic ``df/ds``.

    Satisfies ``xi / (2 K gamma) + f**(gamma - 2) * f' = 0`` wherever f > 0.
    Raises :class:`BoundaryError` for ``gamma > 1`` where ``f(s) = 0``.
    """
    f = np.asarray(f_eval(s, params), dtype=float)
    if params.isothermal:
        out = -params.xi / (2.0 * params.K) * f
    else:
        if np.any(f <= 0.0):
            if params.xi == 0.0:
                out = np.zeros_like(f)
                return float(out) if out.ndim == 0 else out
            raise BoundaryError("f' is undefined on the vacuum region of a compact profile")
        base = _inner_slope(params) * np.asarray(s, dtype=float) + params.alpha
        p = 1.0 / (params.gamma - 1.0)
        out = p * base ** (p - 1.0) * _inner_slope(params)
    return float(out) if out.ndim == 0 else out


def support_geometry(state: EmdenState, params: ModelParams) -> SupportGeometry:
    state.check_params(params)
    center = -params.d.copy()
    s_max = s_limit(params)
    if s_max is not None:
        return SupportGeometry(True, s_max, state.a * np.sqrt(s_max), center)
    return SupportGeometry(False, None, None, center)


def s_limit(params: ModelParams) -> Optional[float]:
    """Largest s inside the compact support, or None when unbounded.

    A support too large to represent (denominator underflow) counts as unbounded.
    """
    if params.gamma > 1.0 and params.xi > 0.0:
        denom = params.xi * (params.gamma - 1.0)
        if denom > 0.0:
            s_max = 2.0 * params.K * params.gamma * params.alpha / denom
            if math.isfinite(s_max):
                return s_max
    return None


def fields(state: EmdenState, x, params: ModelParams):
    """Vectorised density and velocity at points ``x`` of shape ``(..., N)``.

    Returns ``(rho, u, s)`` with ``u`` of shape ``(..., N)``.
    """
    state.check_params(params)
    x = _position(x, params)
    shifted = x + params.d
    y = shifted / state.a
    s = np.sum(y * y, axis=-1)
    rho = np.asarray(f_eval(s, params)) / np.prod(state.a)
    u = (state.a_dot / state.a) * shifted
    return rho, u, s


def evaluate_field(state: EmdenState, x, params: ModelParams) -> FieldSample:
    x = _position(x, params)
    if x.ndim != 1:
        raise InputError("evaluate_field takes a single position; use fields() for batches")
    rho, u, s = fields(state, x, params)
    return FieldSample(x=x.copy(), rho=float(rho), u=u, s=float(s))


def _finite_mass_check(params: ModelParams) -> None:
    if params.xi <= 0.0:
        raise UnsupportedRegimeError(
            f"total mass is infinite for xi={params.xi} (requires xi > 0)")


def _axis_rule(rule: str, n: int):
    """Nodes and weights on [-1, 1]."""
    if rule == "midpoint":
        nodes = -1.0 + (2.0 * np.arange(n) + 1.0) / n
        return nodes, np.full(n, 2.0 / n)
    if rule == "gauss":
        return np.polynomial.legendre.leggauss(n)
    raise InputError(f"unknown quadrature rule {rule!r}")


def mass_box_halfwidth_s(params: ModelParams, quad: MassQuadrature) -> float:
    """Value of s reached at the box faces (box half-width is a_i * sqrt of this)."""
    _finite_mass_check(params)
    s_max = s_limit(params)
    if s_max is not None:
        return s_max
    R_s = quad.tail_exponent * 2.0 * params.K / params.xi
    if not (params.isothermal and math.isfinite(R_s)):
        raise UnsupportedRegimeError("support too large for tensor-product quadrature")
    return R_s


def mass_tail_bound(params: ModelParams, quad: MassQuadrature = MassQuadrature()) -> float:
    """Upper bound on the mass fraction lost by truncating an unbounded profile.

    Zero for compact profiles. For the isothermal profile the box contains the
    ball ``s <= R_s`` whose exterior carries the fraction
    ``Q(N/2, xi R_s / 2K)`` (regularised upper incomplete gamma).
    """
    _finite_mass_check(params)
    if s_limit(params) is not None:
        return 0.0
    if not params.isothermal:
        raise UnsupportedRegimeError("support too large for tensor-product quadrature")
    return float(special.gammaincc(params.N / 2.0, quad.tail_exponent))


def total_mass(state: EmdenState, params: ModelParams,
               quad: MassQuadrature = MassQuadrature()) -> float:
    """Integral of the density over R^N by tensor-product quadrature in x.

    The box is centred on the ellipsoid centre with half-widths
    ``a_i * sqrt(R_s)`` at the current scale factors.
    """
    state.check_params(params)
    _finite_mass_check(params)
    R_s = mass_box_halfwidth_s(params, quad)
    n = quad.nodes_for(params.N)
    ref_nodes, ref_weights = _axis_rule(quad.rule, n)
    half = state.a * np.sqrt(R_s)
    center = -params.d

    # accumulate s over a broadcast grid instead of materialising coordinates
    s = np.zeros((1,) * params.N)
    weight = np.ones((1,) * params.N)
    for axis in range(params.N):
        shape = [1] * params.N
        shape[axis] = n
        x_axis = center[axis] + half[axis] * ref_nodes
        y_axis = (x_axis + params.d[axis]) / state.a[axis]
        s = s + (y_axis * y_axis).reshape(shape)
        weight = weight * (half[axis] * ref_weights).reshape(shape)
    rho = np.asarray(f_eval(s, params)) / np.prod(state.a)
    return float(np.sum(rho * weight))
