"""Finite-volume solver for isentropic (p = K rho^gamma) Euler flow in 1D/2D.

MUSCL reconstruction of primitive variables with the minmod limiter,
Rusanov (local Lax-Friedrichs) interface fluxes and two-stage SSP Runge-Kutta
time stepping. Ghost layers are filled from the exact self-similar solution so
the finite domain reproduces the unbounded-domain flow; the error against the
exact fields under grid refinement measures the scheme's order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .emden import Trajectory, integrate
from .errors import ConfigurationError, InputError, NumericalBreakdown
from .integrator import Tolerance
from .params import EmdenState, ModelParams
from .profile import fields, support_geometry
from .residual import convergence_order

GAUSS_OFFSETS = np.array([-1.0, 1.0]) / (2.0 * math.sqrt(3.0))  # in units of h


@dataclass(frozen=True)
class GridSpec:
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    cells: Tuple[int, ...]
    ghost: int = 2

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        cells = tuple(int(v) for v in np.atleast_1d(self.cells))
        if not (len(lower) == len(upper) == len(cells)) or len(cells) not in (1, 2):
            raise InputError("grid must be 1D or 2D with matching lower/upper/cells")
        if any(hi <= lo for lo, hi in zip(lower, upper)) or any(n < 2 for n in cells):
            raise InputError("grid needs upper > lower and at least two cells per axis")
        if self.ghost < 2:
            raise InputError("MUSCL reconstruction needs at least two ghost layers")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "cells", cells)

    @property
    def dims(self) -> int:
        return len(self.cells)

    @property
    def h(self) -> Tuple[float, ...]:
        return tuple((hi - lo) / n for lo, hi, n in zip(self.lower, self.upper, self.cells))


@dataclass
class FvGrid:
    """Cell averages on a Cartesian grid with ghost layers.

    ``U[0]`` is density and ``U[1:]`` the momentum components; every array
    axis after the first includes ``ghost`` layers on each side.
    """

    spec: GridSpec
    U: np.ndarray
    rho_floor: float = 1e-15
    t: float = 0.0

    @property
    def dims(self) -> int:
        return self.spec.dims

    @property
    def h(self) -> Tuple[float, ...]:
        return self.spec.h

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def interior(self) -> Tuple[slice, ...]:
        g = self.spec.ghost
        return tuple(slice(g, g + n) for n in self.spec.cells)

    def centers(self, with_ghosts: bool = True) -> np.ndarray:
        """Cell centres, shape ``(*cells[+2g], dims)``."""
        return _centers(self.spec, with_ghosts)

    @property
    def rho(self) -> np.ndarray:
        return self.U[0][self.interior]

    @property
    def momentum(self) -> np.ndarray:
        return self.U[1:][(slice(None),) + self.interior]

    @property
    def velocity(self) -> np.ndarray:
        return self.momentum / self.rho

    def totals(self) -> np.ndarray:
        """Interior integrals of density and momentum components."""
        axes = tuple(range(1, self.dims + 1))
        return self.U[(slice(None),) + self.interior].sum(axis=axes) * self.cell_volume

    def copy(self) -> "FvGrid":
        return FvGrid(self.spec, self.U.copy(), self.rho_floor, self.t)


def _centers(spec: GridSpec, with_ghosts: bool) -> np.ndarray:
    g = spec.ghost if with_ghosts else 0
    axes = [lo + (np.arange(-g, n + g) + 0.5) * h
            for lo, n, h in zip(spec.lower, spec.cells, spec.h)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def exact_cell_averages(spec: GridSpec, state: EmdenState, params: ModelParams,
                        mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Two-point-per-axis Gauss averages of ``(rho, rho u)`` over cells.

    Returns conserved variables with ghost layers (shape ``(1+dims, ...)``);
    with ``mask`` only the selected cells are evaluated (others are zero).
    """
    centers = _centers(spec, True)
    if mask is not None:
        centers = centers[mask]
    dims = spec.dims
    h = np.array(spec.h)
    out = np.zeros((1 + dims,) + centers.shape[:-1])
    offsets = np.stack(np.meshgrid(*([GAUSS_OFFSETS] * dims), indexing="ij"), -1).reshape(-1, dims)
    for off in offsets:
        rho, u, _ = fields(state, centers + off * h, params)
        out[0] += rho
        out[1:] += np.moveaxis(rho[..., None] * u, -1, 0)
    out /= len(offsets)
    if mask is None:
        return out
    full = np.zeros((1 + dims,) + mask.shape)
    full[(slice(None),) + (mask,)] = out
    return full


def fv_init(spec: GridSpec, params: ModelParams, state0: EmdenState,
            rho_floor: float = 1e-15, exact_ghosts: bool = True) -> FvGrid:
    """Cell averages of the exact fields at ``state0`` (ghost layers included)."""
    if params.mu != 0.0:
        raise ConfigurationError("the finite-volume cross-check is inviscid; set mu = 0")
    if params.N != spec.dims:
        raise ConfigurationError(f"model dimension N={params.N} does not match grid dims {spec.dims}")
    if not rho_floor > 0.0:
        raise ConfigurationError("rho_floor must be positive")
    geom = support_geometry(state0, params)
    if geom.bounded and not exact_ghosts:
        lo = geom.center - geom.semi_axes
        hi = geom.center + geom.semi_axes
        if np.any(lo <= np.array(spec.lower)) or np.any(hi >= np.array(spec.upper)):
            raise ConfigurationError(
                "compact support reaches the domain boundary; use exact ghost cells")
    U = exact_cell_averages(spec, state0, params)
    grid = FvGrid(spec, U, rho_floor, state0.t)
    _apply_floor(grid.U, rho_floor)
    return grid


def _apply_floor(U: np.ndarray, floor: float) -> int:
    low = U[0] < floor
    count = int(np.count_nonzero(low))
    if count:
        U[0][low] = floor
        U[1:, low] = 0.0
    return count


# ---------------------------------------------------------------------------
# fluxes

def _pressure(rho, params: ModelParams):
    return params.K * rho ** params.gamma


def sound_speed(rho, params: ModelParams):
    return np.sqrt(params.K * params.gamma * rho ** (params.gamma - 1.0))


def physical_flux(w: np.ndarray, axis: int, params: ModelParams) -> np.ndarray:
    """Flux of conserved ``w = (rho, m_1, ..., m_d)`` along ``axis``."""
    rho = w[0]
    m = w[1:]
    un = m[axis] / rho
    flux = np.empty_like(w)
    flux[0] = m[axis]
    flux[1:] = m * un
    flux[1 + axis] += _pressure(rho, params)
    return flux


def numerical_flux(w_left, w_right, axis: int, params: ModelParams) -> np.ndarray:
    """Rusanov flux between conserved states (leading axis = components)."""
    w_left = np.asarray(w_left, dtype=float)
    w_right = np.asarray(w_right, dtype=float)
    if not (np.all(np.isfinite(w_left)) and np.all(np.isfinite(w_right))):
        raise NumericalBreakdown("non-finite state passed to the interface flux")
    fl = physical_flux(w_left, axis, params)
    fr = physical_flux(w_right, axis, params)
    sl = np.abs(w_left[1 + axis] / w_left[0]) + sound_speed(w_left[0], params)
    sr = np.abs(w_right[1 + axis] / w_right[0]) + sound_speed(w_right[0], params)
    speed = np.maximum(sl, sr)
    return 0.5 * (fl + fr) - 0.5 * speed * (w_right - w_left)


def _minmod(a, b):
    return np.where(a * b > 0.0, np.where(np.abs(a) < np.abs(b), a, b), 0.0)


def _to_primitive(U):
    W = U.copy()
    W[1:] = U[1:] / U[0]
    return W


def _to_conserved(W):
    U = W.copy()
    U[1:] = W[1:] * W[0]
    return U


# ---------------------------------------------------------------------------
# boundary policies

class PeriodicGhosts:
    def __call__(self, grid: FvGrid, t: float) -> None:
        g = grid.spec.ghost
        for axis, n in enumerate(grid.spec.cells):
            ax = axis + 1
            U = np.moveaxis(grid.U, ax, 1)
            U[:, :g] = U[:, n:n + g]
            U[:, n + g:] = U[:, g:2 * g]


class ExactGhosts:
    """Dirichlet ghost data from the exact solution at the stage time."""

    def __init__(self, spec: GridSpec, params: ModelParams, trajectory: Trajectory):
        self.params = params
        self.trajectory = trajectory
        mask = np.ones(tuple(n + 2 * spec.ghost for n in spec.cells), dtype=bool)
        g = spec.ghost
        mask[tuple(slice(g, g + n) for n in spec.cells)] = False
        self.mask = mask
        self.spec = spec

    def values(self, t: float) -> np.ndarray:
        return exact_ghost_fill_values(self.spec, t, self.params, self.trajectory, self.mask)

    def __call__(self, grid: FvGrid, t: float) -> None:
        vals = self.values(t)
        grid.U[(slice(None),) + (self.mask,)] = vals[(slice(None),) + (self.mask,)]
        _apply_floor(grid.U, grid.rho_floor)


def exact_ghost_fill_values(spec, t, params, trajectory: Trajectory, mask):
    lo, hi = trajectory.t_first, trajectory.t_last
    if not (lo <= t <= hi):
        raise InputError(f"t={t} outside the trajectory range [{lo}, {hi}]")
    return exact_cell_averages(spec, trajectory.state_at(t), params, mask)


def exact_ghost_fill(grid: FvGrid, t: float, params: ModelParams,
                     trajectory: Trajectory) -> FvGrid:
    """Return a copy of ``grid`` whose ghost cells hold exact averages at ``t``."""
    out = grid.copy()
    ExactGhosts(grid.spec, params, trajectory)(out, t)
    return out


# ---------------------------------------------------------------------------
# time stepping

@dataclass
class StepInfo:
    dt: float
    boundary_inflow: np.ndarray  # time-integrated net inflow of (rho, m) through the boundary
    floor_hits: int = 0


def _max_rate(grid: FvGrid, params: ModelParams) -> float:
    """sum_k max(|u_k| + c) / h_k over interior cells."""
    rho = grid.rho
    if not np.all(np.isfinite(grid.U)) or np.any(rho <= 0.0):
        bad = np.argwhere((~np.isfinite(grid.U[(slice(None),) + grid.interior])).any(axis=0) | (rho <= 0.0))
        idx = tuple(int(v) for v in bad[0]) if len(bad) else None
        raise NumericalBreakdown(f"invalid state at interior cell {idx}", index=idx)
    c = sound_speed(rho, params)
    rate = 0.0
    for k, hk in enumerate(grid.h):
        speed = np.abs(grid.momentum[k] / rho) + c
        if not np.all(np.isfinite(speed)):
            idx = tuple(int(v) for v in np.argwhere(~np.isfinite(speed))[0])
            raise NumericalBreakdown(f"non-finite wave speed at cell {idx}", index=idx)
        rate += float(np.max(speed)) / hk
    return rate


def _rhs(grid: FvGrid, params: ModelParams, order: int):
    """Flux divergence on interior cells and the net boundary inflow per unit time."""
    g = grid.spec.ghost
    dims = grid.dims
    W = _to_primitive(grid.U)
    dU = np.zeros_like(grid.U[(slice(None),) + grid.interior])
    inflow = np.zeros(1 + dims)
    for axis in range(dims):
        n = grid.spec.cells[axis]
        # keep all cells along `axis`, interior cells across
        sl = [slice(None)] + [slice(g, g + m) if k != axis else slice(None)
                              for k, m in enumerate(grid.spec.cells)]
        Wa = np.moveaxis(W[tuple(sl)], axis + 1, 1)
        if order == 2:
            slope = _minmod(Wa[:, 1:-1] - Wa[:, :-2], Wa[:, 2:] - Wa[:, 1:-1])
            # slope[j-1] belongs to cell j
            WL = Wa[:, g - 1:g + n] + 0.5 * slope[:, g - 2:g + n - 1]
            WR = Wa[:, g:g + n + 1] - 0.5 * slope[:, g - 1:g + n]
        else:
            WL = Wa[:, g - 1:g + n]
            WR = Wa[:, g:g + n + 1]
        F = numerical_flux(_to_conserved(WL), _to_conserved(WR), axis, params)
        h = grid.h[axis]
        div = (F[:, 1:] - F[:, :-1]) / h
        dU -= np.moveaxis(div, 1, axis + 1)
        face_area = grid.cell_volume / h
        boundary = (F[:, 0] - F[:, -1]).reshape(1 + dims, -1).sum(axis=1)
        inflow += boundary * face_area
    return dU, inflow


def fv_step(grid: FvGrid, params: ModelParams, boundary: Callable[[FvGrid, float], None],
            cfl: float, order: int = 2, dt_max: float = math.inf) -> Tuple[FvGrid, StepInfo]:
    """Advance one SSP-RK2 step; returns the new grid and step diagnostics."""
    if not 0.0 < cfl < 1.0:
        raise ConfigurationError(f"cfl must lie in (0, 1), got {cfl}")
    if order not in (1, 2):
        raise ConfigurationError("order must be 1 or 2")
    t0 = grid.t
    work = grid.copy()
    boundary(work, t0)
    dt = min(cfl / _max_rate(work, params), dt_max)
    inner = (slice(None),) + work.interior

    k1, in1 = _rhs(work, params, order)
    stage = work.copy()
    stage.U[inner] = work.U[inner] + dt * k1
    hits = _apply_floor(stage.U, stage.rho_floor)
    stage.t = t0 + dt
    boundary(stage, t0 + dt)
    _max_rate(stage, params)

    k2, in2 = _rhs(stage, params, order)
    out = stage.copy()
    out.U[inner] = 0.5 * work.U[inner] + 0.5 * (stage.U[inner] + dt * k2)
    hits += _apply_floor(out.U, out.rho_floor)
    out.t = t0 + dt
    boundary(out, out.t)
    return out, StepInfo(dt, 0.5 * dt * (in1 + in2), hits)


# ---------------------------------------------------------------------------
# manufactured-solution convergence study

@dataclass
class FvConfig:
    params: ModelParams
    init: EmdenState
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    t_end: float
    levels: Sequence[int] = (64, 128, 256, 512)
    cfl: float = 0.4
    order: int = 2
    rho_floor: float = 1e-15
    boundary: str = "exact"

    def __post_init__(self):
        if len(self.levels) < 3:
            raise ConfigurationError("a convergence study needs at least three levels")
        if not self.t_end > self.init.t:
            raise ConfigurationError("t_end must exceed the initial time")
        if self.boundary not in ("exact", "periodic"):
            raise ConfigurationError(f"unknown boundary policy {self.boundary!r}")


@dataclass
class LevelResult:
    cells: Tuple[int, ...]
    h: float
    steps: int
    dt_min: float
    dt_max: float
    floor_hits: int
    rho_errors: Tuple[float, float, float]  # L1, L2, Linf
    u_errors: Tuple[float, float, float]
    grid: Optional[FvGrid] = field(default=None, repr=False)


@dataclass
class FvRunReport:
    t_final: float
    levels: List[LevelResult]
    rho_l1_order: Optional[float] = None
    rho_l2_order: Optional[float] = None
    rho_linf_order: Optional[float] = None
    u_l1_order: Optional[float] = None
    pairwise_rho_l1_orders: List[float] = field(default_factory=list)
    failed: bool = False
    failure: Optional[str] = None

    @property
    def monotone(self) -> bool:
        errs = [lv.rho_errors[0] for lv in self.levels]
        return all(b < a for a, b in zip(errs, errs[1:]))


def _norms(err: np.ndarray, vol: float) -> Tuple[float, float, float]:
    err = np.abs(err)
    return (float(err.sum() * vol), float(math.sqrt((err * err).sum() * vol)), float(err.max()))


def run_level(config: FvConfig, cells: int, trajectory: Trajectory,
              keep_grid: bool = False) -> LevelResult:
    params = config.params
    dims = params.N
    spec = GridSpec(config.lower, config.upper, (cells,) * dims)
    grid = fv_init(spec, params, config.init, config.rho_floor,
                   exact_ghosts=config.boundary == "exact")
    policy = ExactGhosts(spec, params, trajectory) if config.boundary == "exact" else PeriodicGhosts()
    dts = []
    hits = 0
    while grid.t < config.t_end:
        remaining = config.t_end - grid.t
        grid, info = fv_step(grid, params, policy, config.cfl, config.order, dt_max=remaining)
        if config.t_end - grid.t < 1e-14 * config.t_end:
            grid.t = config.t_end
        dts.append(info.dt)
        hits += info.floor_hits
    exact = exact_cell_averages(spec, trajectory.state_at(config.t_end), params)
    inner = grid.interior
    rho_ex = exact[0][inner]
    # velocity is undefined in vacuum; compare it only where the exact density is resolved
    occupied = rho_ex > config.rho_floor
    u_err = np.where(occupied,
                     grid.velocity - exact[1:][(slice(None),) + inner] / np.where(occupied, rho_ex, 1.0),
                     0.0)
    vol = grid.cell_volume
    return LevelResult(
        cells=spec.cells, h=spec.h[0], steps=len(dts), dt_min=min(dts), dt_max=max(dts),
        floor_hits=hits,
        rho_errors=_norms(grid.rho - rho_ex, vol),
        u_errors=_norms(u_err, vol),
        grid=grid if keep_grid else None,
    )


def fv_run(config: FvConfig, keep_grids: bool = False,
           tol: Tolerance = Tolerance(1e-12, 1e-14)) -> FvRunReport:
    """Run every refinement level and fit convergence orders against the exact solution."""
    trajectory = integrate(config.params, config.init, config.t_end, tol)
    if trajectory.termination.kind != "reached_end":
        raise ConfigurationError(
            f"exact solution does not survive to t_end ({trajectory.termination})")
    report = FvRunReport(t_final=config.t_end, levels=[])
    for cells in config.levels:
        try:
            report.levels.append(run_level(config, cells, trajectory, keep_grids))
        except (NumericalBreakdown, FloatingPointError) as exc:
            report.failed = True
            report.failure = f"level {cells}: {exc}"
            break
    return fit_orders(report)


def fit_orders(report: FvRunReport) -> FvRunReport:
    """Fill the fitted and pairwise convergence orders from the finished levels."""
    done = report.levels
    if len(done) >= 3:
        hs = [lv.h for lv in done]

        def fit(pick):
            return convergence_order([(h, pick(lv)) for h, lv in zip(hs, done)]).order

        report.rho_l1_order = fit(lambda lv: lv.rho_errors[0])
        report.rho_l2_order = fit(lambda lv: lv.rho_errors[1])
        report.rho_linf_order = fit(lambda lv: lv.rho_errors[2])
        report.u_l1_order = fit(lambda lv: lv.u_errors[0])
    report.pairwise_rho_l1_orders = [
        math.log(a.rho_errors[0] / b.rho_errors[0]) / math.log(a.h / b.h)
        for a, b in zip(done, done[1:]) if a.rho_errors[0] > 0.0 and b.rho_errors[0] > 0.0]
    return report
