"""Command-line front end.

    emdenlab integrate|classify-sweep|field|verify-residual|mass-check|crosscheck
             --config CONFIG [--out PATH] [--threads N]

Every command writes CSV (header row first, floats with 17 significant
digits). Exit codes: 0 success, 2 configuration error, 3 numerical
breakdown, 4 unsupported parameter regime.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from . import crosscheck as fv
from .config import ConfigError, RunConfig
from .emden import Touchdown, classify, integrate
from .errors import (BoundaryError, ConfigurationError, DomainError, InputError,
                     NumericalBreakdown, UnsupportedRegimeError)
from .integrator import Tolerance
from .profile import MassQuadrature, fields, s_limit, total_mass
from .residual import ExactField, convergence_order, residual_exact, residual_fd

log = logging.getLogger("emdenlab")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_UNSUPPORTED = 4


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


class CsvTable:
    def __init__(self, header: Sequence[str]):
        self.header = list(header)
        self.rows: List[List[str]] = []
        self.footer: List[List[str]] = []

    def add(self, row: Iterable) -> None:
        row = [fmt(v) for v in row]
        if len(row) != len(self.header):
            raise AssertionError(f"row has {len(row)} fields, header {len(self.header)}")
        self.rows.append(row)

    def add_footer(self, *fields_) -> None:
        self.footer.append(["#" + fmt(fields_[0])] + [fmt(v) for v in fields_[1:]])

    def render(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header)
        writer.writerows(self.rows)
        writer.writerows(self.footer)
        return buf.getvalue()


def _pmap(fn: Callable, items: Sequence, threads: int) -> list:
    """Order-preserving map; results never depend on the thread count."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _tolerance(cfg: RunConfig) -> Tolerance:
    return Tolerance(cfg.get("integration", "rtol"), cfg.get("integration", "atol"))


def _state_at(cfg: RunConfig, params, t: float):
    init = cfg.initial_state()
    if t < init.t:
        raise InputError(f"time {t} precedes the initial time {init.t}")
    if t == init.t:
        return init
    traj = integrate(params, init, t, _tolerance(cfg),
                     touch_fraction=cfg.get("integration", "touch_fraction"))
    if traj.termination.kind != "reached_end":
        raise InputError(f"time {t} outside the integrated range: {traj.termination}")
    return traj.final_state()


# ---------------------------------------------------------------------------
# commands

def cmd_integrate(cfg: RunConfig, threads: int = 1) -> CsvTable:
    params = cfg.model_params()
    init = cfg.initial_state()
    N = params.N
    traj = integrate(params, init, cfg.get("integration", "t_end"), _tolerance(cfg),
                     touch_fraction=cfg.get("integration", "touch_fraction"))
    if params.gamma == 1.0:
        energy_cols = [f"E_{i + 1}" for i in range(N)]
    else:
        energy_cols = ["H"]
    table = CsvTable(["t"] + [f"a_{i + 1}" for i in range(N)]
                     + [f"adot_{i + 1}" for i in range(N)] + energy_cols)
    energies = traj.energies()
    for t, a, ad, e in zip(traj.t, traj.a, traj.a_dot, energies):
        table.add([t, *a, *ad, *np.atleast_1d(e)])
    term = traj.termination
    if isinstance(term, Touchdown):
        table.add_footer("termination", term.kind, term.t_event, term.axis + 1)
    elif term.kind == "step_failure":
        table.add_footer("termination", term.kind, term.t_fail, term.reason)
    else:
        table.add_footer("termination", term.kind, term.t_end)
    return table


def cmd_classify_sweep(cfg: RunConfig, threads: int = 1) -> CsvTable:
    base = cfg.model_params()
    N = base.N
    gammas = cfg.get("sweep", "gamma") or [base.gamma]
    xis = cfg.get("sweep", "xi") or [base.xi]
    a1_sets = cfg.get("sweep", "a1") or [list(cfg.initial_state().a_dot)]
    horizon = cfg.get("sweep", "horizon")
    tol = _tolerance(cfg)
    grid = list(itertools.product(gammas, xis, a1_sets))

    def work(point):
        gamma, xi, a1 = point
        try:
            params = base.replace(gamma=gamma, xi=xi)
            init = cfg.initial_state(a1=a1)
            return classify(params, init, horizon, tol), None
        except Exception as exc:  # recorded in-row; the sweep continues
            return None, f"{type(exc).__name__}: {exc}"

    results = _pmap(work, grid, threads)
    a0 = cfg.initial_state().a
    table = CsvTable(["gamma", "xi"] + [f"a0_{i + 1}" for i in range(N)]
                     + [f"a1_{i + 1}" for i in range(N)]
                     + ["verdict", "case", "bound_T", "t_est", "t_horizon",
                        "from_step_failure", "error"])
    for (gamma, xi, a1), (res, err) in zip(grid, results):
        if res is None:
            table.add([gamma, xi, *a0, *a1, "error", None, None, None, None, None, err])
        else:
            table.add([gamma, xi, *a0, *a1, res.verdict, res.case, res.bound_T, res.t_est,
                       res.t_horizon, res.from_step_failure, None])
    return table


def cmd_field(cfg: RunConfig, threads: int = 1) -> CsvTable:
    params = cfg.model_params()
    N = params.N
    t = cfg.get("field", "t")
    state = _state_at(cfg, params, t)
    lower = cfg.require("field", "lower")
    upper = cfg.require("field", "upper")
    counts = cfg.require("field", "points")
    axes = [np.linspace(lo, hi, n) for lo, hi, n in zip(lower, upper, counts)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, N)
    rho, u, s = fields(state, pts, params)
    table = CsvTable([f"x_{i + 1}" for i in range(N)] + ["rho"]
                     + [f"u_{i + 1}" for i in range(N)] + ["s"])
    for x, r, uu, ss in zip(pts, np.atleast_1d(rho), u, np.atleast_1d(s)):
        table.add([*x, r, *uu, ss])
    return table


def _residual_points(cfg: RunConfig, params, state) -> List[np.ndarray]:
    points = [np.asarray(p, dtype=float) for p in (cfg.get("residual", "points") or [])]
    count = cfg.get("residual", "random_points")
    if count:
        rng = np.random.default_rng(cfg.seed)
        s_max = s_limit(params)
        s_cap = 0.5 * s_max if s_max is not None else 1.0
        for _ in range(count):
            direction = rng.normal(size=params.N)
            direction /= np.linalg.norm(direction)
            radius = math.sqrt(s_cap) * rng.uniform(0.1, 1.0)
            points.append(state.a * radius * direction - params.d)
    if not points:
        raise ConfigError("[residual] needs points or random_points")
    return points


def cmd_verify_residual(cfg: RunConfig, threads: int = 1) -> CsvTable:
    params = cfg.model_params()
    N = params.N
    init = cfg.initial_state()
    t = cfg.get("residual", "t")
    h0 = cfg.get("residual", "h0")
    halvings = cfg.get("residual", "halvings")
    t_end = cfg.get("residual", "t_end") or (t + 2.0 * h0 + 0.05)
    if t - h0 < init.t:
        raise ConfigError("[residual] t must exceed the initial time by at least h0")
    field = ExactField(params, init, t_end)
    state = field.state(t)
    points = _residual_points(cfg, params, state)
    hs = [h0 / 2 ** k for k in range(halvings + 1)]

    def work(x):
        exact = residual_exact(state, x, params)
        fd = [residual_fd(field, t, x, h, params) for h in hs]
        mass_fit = convergence_order([(r.h, r.mass_residual) for r in fd])
        mom_fits = [convergence_order([(r.h, r.momentum_residual[i]) for r in fd])
                    for i in range(N)]
        return exact, fd, mass_fit, mom_fits

    results = _pmap(work, points, threads)
    table = CsvTable(["point", "t"] + [f"x_{i + 1}" for i in range(N)]
                     + ["method", "h", "mass_residual"]
                     + [f"momentum_{i + 1}" for i in range(N)]
                     + ["mass_order"] + [f"momentum_order_{i + 1}" for i in range(N)])
    for k, (x, (exact, fd, mass_fit, mom_fits)) in enumerate(zip(points, results)):
        table.add([k, t, *x, "closed_form", None, exact.mass_residual,
                   *exact.momentum_residual, None, *([None] * N)])
        orders = [mass_fit.order] + [f.order for f in mom_fits]
        for r in fd:
            table.add([k, t, *x, "finite_difference", r.h, r.mass_residual,
                       *r.momentum_residual, *orders])
    return table


def cmd_mass_check(cfg: RunConfig, threads: int = 1) -> CsvTable:
    params = cfg.model_params()
    quad = MassQuadrature(cfg.get("mass", "nodes"), cfg.get("mass", "rule"),
                          cfg.get("mass", "tail_exponent"))
    times = sorted(cfg.get("mass", "times"))
    init = cfg.initial_state()
    total_mass(init, params, quad)  # fail fast on infinite-mass regimes
    if times[-1] > init.t:
        traj = integrate(params, init, times[-1], _tolerance(cfg))
        if traj.termination.kind != "reached_end":
            raise InputError(f"trajectory ended before t={times[-1]}: {traj.termination}")
        states = [init if t == init.t else traj.state_at(t) for t in times]
    else:
        states = [init for _ in times]
    masses = _pmap(lambda st: total_mass(st, params, quad), states, threads)
    table = CsvTable(["t", "mass", "relative_drift"])
    for t, m in zip(times, masses):
        table.add([t, m, (m - masses[0]) / masses[0] if masses[0] else 0.0])
    return table


def cmd_crosscheck(cfg: RunConfig, threads: int = 1, out: Optional[Path] = None) -> CsvTable:
    params = cfg.model_params()
    config = fv.FvConfig(
        params=params, init=cfg.initial_state(),
        lower=tuple(cfg.require("crosscheck", "lower")),
        upper=tuple(cfg.require("crosscheck", "upper")),
        t_end=cfg.require("crosscheck", "t_end"),
        levels=tuple(cfg.get("crosscheck", "levels")),
        cfl=cfg.get("crosscheck", "cfl"), order=cfg.get("crosscheck", "order"),
        rho_floor=cfg.get("crosscheck", "rho_floor"))
    snapshots = cfg.get("crosscheck", "snapshots")
    trajectory = integrate(params, config.init, config.t_end, Tolerance(1e-12, 1e-14))
    if trajectory.termination.kind != "reached_end":
        raise ConfigurationError(f"exact solution ends early: {trajectory.termination}")

    def work(cells):
        try:
            return fv.run_level(config, cells, trajectory, keep_grid=snapshots), None
        except (NumericalBreakdown, FloatingPointError) as exc:
            return None, f"level {cells}: {exc}"

    results = _pmap(work, list(config.levels), threads)
    report = fv.FvRunReport(t_final=config.t_end, levels=[])
    for lv, err in results:
        if lv is None:
            report.failed, report.failure = True, err
            break
        report.levels.append(lv)
    fv.fit_orders(report)

    table = CsvTable(["cells", "h", "steps", "dt_min", "dt_max", "floor_hits",
                      "rho_L1", "rho_L2", "rho_Linf", "u_L1", "u_L2", "u_Linf"])
    for lv in report.levels:
        table.add([lv.cells[0], lv.h, lv.steps, lv.dt_min, lv.dt_max, lv.floor_hits,
                   *lv.rho_errors, *lv.u_errors])
    table.add_footer("orders", report.rho_l1_order, report.rho_l2_order,
                     report.rho_linf_order, report.u_l1_order)
    table.add_footer("monotone", report.monotone, "failed", report.failed,
                     report.failure or "")
    if snapshots and out is not None:
        for lv in report.levels:
            _write(snapshot_table(lv.grid).render(),
                   out.with_name(f"{out.stem}_snapshot_{lv.cells[0]}.csv"))
    return table


def snapshot_table(grid: fv.FvGrid) -> CsvTable:
    dims = grid.dims
    table = CsvTable([f"x_{i + 1}" for i in range(dims)] + ["rho"]
                     + [f"u_{i + 1}" for i in range(dims)])
    centers = grid.centers(with_ghosts=False).reshape(-1, dims)
    rho = grid.rho.reshape(-1)
    u = grid.velocity.reshape(dims, -1).T
    for x, r, uu in zip(centers, rho, u):
        table.add([*x, r, *uu])
    return table


COMMANDS = {
    "integrate": cmd_integrate,
    "classify-sweep": cmd_classify_sweep,
    "field": cmd_field,
    "verify-residual": cmd_verify_residual,
    "mass-check": cmd_mass_check,
    "crosscheck": cmd_crosscheck,
}


def _write(text: str, path: Optional[Path]) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emdenlab", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, type=Path)
    parser.add_argument("--out", type=Path, default=None,
                        help="CSV destination (default: [output] path, else stdout)")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = RunConfig.from_path(args.config)
        out = args.out
        if out is None and cfg.get("output", "path"):
            out = Path(cfg.get("output", "path"))
        cmd = COMMANDS[args.command]
        if cmd is cmd_crosscheck:
            table = cmd(cfg, args.threads, out)
        else:
            table = cmd(cfg, args.threads)
    except (ConfigError, ConfigurationError, InputError, BoundaryError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UnsupportedRegimeError as exc:
        print(f"unsupported regime: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (NumericalBreakdown, DomainError, FloatingPointError) as exc:
        print(f"numerical breakdown: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _write(table.render(), out)
    log.info("wrote %d rows", len(table.rows))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
