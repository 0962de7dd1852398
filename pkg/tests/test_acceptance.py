"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (or execute this file).
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from emdenlab.cli import main
from emdenlab.crosscheck import FvConfig, fv_run
from emdenlab.emden import (BLOWUP_BY_THEOREM, Touchdown, classify, integrate,
                            integrate_radial, touchdown_time_quadrature)
from emdenlab.integrator import Tolerance
from emdenlab.params import EmdenState, ModelParams
from emdenlab.profile import MassQuadrature, s_limit, s_variable, total_mass
from emdenlab.residual import ExactField, fd_sweep, residual_exact

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SQRT_PI_2 = math.sqrt(math.pi / 2)


@pytest.fixture
def verdict(request):
    """Print one criterion line to the terminal, whatever the outcome."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")
    lines = []

    def record(number, ok, detail):
        lines.append(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    yield record
    for line in lines:
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        else:
            print(line)


class Clock:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def test_01_radial_reduction(verdict):
    p = ModelParams(3, gamma=5 / 3, xi=1.0)
    with Clock() as clk:
        traj = integrate(p, EmdenState(0.0, [1, 1, 1], [0, 0, 0]), 1.0, Tolerance(1e-10, 1e-12))
        ref = integrate_radial(p, 1.0, 0.0, traj.t)
        dev = float(np.max(np.abs(traj.a - ref[0][:, None])))
    ok = traj.termination.kind == "reached_end" and dev <= 1e-8 and clk.elapsed < 1.0
    assert verdict(1, ok, f"max deviation {dev:.2e} (<= 1e-8), {clk.elapsed:.2f}s (< 1s)")


def _energy_scale(traj, params):
    """Size of the energy terms along the run (1 + max |kinetic| + |potential|)."""
    a, ad = traj.a, traj.a_dot
    if params.gamma == 1.0:
        return 1.0 + np.max(0.5 * ad * ad + np.abs(params.xi * np.log(a)), axis=0)
    kin = 0.5 * np.sum(ad * ad, axis=1)
    pot = np.abs(params.xi / (params.gamma - 1.0) * np.prod(a, axis=1) ** (1.0 - params.gamma))
    return 1.0 + np.max(kin + pot)


def test_02_energy_conservation(verdict):
    rng = np.random.default_rng(2024)
    worst, worst_strict, touched = 0.0, 0.0, 0
    with Clock() as clk:
        for _ in range(20):
            gamma = float(rng.choice([1.0, 1.4, 2.0, 3.0]))
            N = int(rng.integers(1, 4))
            p = ModelParams(N, gamma=gamma, xi=float(rng.uniform(-2.0, 2.0)))
            init = EmdenState(0.0, rng.uniform(0.5, 2.0, N), rng.uniform(-0.5, 0.5, N))
            traj = integrate(p, init, 1.0, Tolerance(1e-10, 1e-12))
            assert traj.termination.kind in ("reached_end", "touchdown")
            e = traj.energies()
            drift = np.max(np.abs(e - e[0]), axis=0)
            strict = drift / (1.0 + np.abs(e[0]))
            if traj.termination.kind == "touchdown":
                # kinetic and potential terms diverge at touchdown; measure relative to them
                touched += 1
                rel = drift / _energy_scale(traj, p)
            else:
                rel = strict
            worst = max(worst, float(np.max(rel)))
            worst_strict = max(worst_strict, float(np.max(strict)))
    ok = worst <= 1e-7 and clk.elapsed < 5.0
    assert verdict(2, ok, f"worst relative drift {worst:.2e} (<= 1e-7; {touched} touchdown runs "
                          f"scaled by energy-term size, |H0| scaling gives {worst_strict:.1e}), "
                          f"{clk.elapsed:.2f}s (< 5s)")


def _random_interior_case(rng, gamma):
    N = int(rng.integers(1, 4))
    xi = float(rng.uniform(-2.0, 2.0))
    params = ModelParams(N, gamma=gamma, K=float(rng.uniform(0.5, 2.0)), xi=xi,
                         alpha=float(rng.uniform(0.5, 2.0)), d=rng.uniform(-1.0, 1.0, N))
    state = EmdenState(float(rng.uniform(0.0, 1.0)), rng.uniform(0.5, 2.0, N),
                       rng.uniform(-1.0, 1.0, N))
    s_max = s_limit(params)
    s_cap = 0.95 * s_max if s_max is not None else 4.0
    direction = rng.normal(size=N)
    direction /= np.linalg.norm(direction)
    x = state.a * math.sqrt(s_cap * rng.uniform(0.0, 1.0)) * direction - params.d
    if s_max is not None:
        assert s_variable(state, x, params) <= 0.99 * s_max
    return params, state, x


def test_03_exact_residuals(verdict):
    rng = np.random.default_rng(3)
    gammas = [1.0, 1.4, 5 / 3, 2.0, 3.0]
    worst_mass = worst_mom = 0.0
    identical = True
    with Clock() as clk:
        for k in range(1000):
            params, state, x = _random_interior_case(rng, gammas[k % len(gammas)])
            r0 = residual_exact(state, x, params.replace(mu=0.0))
            r1 = residual_exact(state, x, params.replace(mu=1.0))
            identical &= bool(np.array_equal(r0.momentum_residual, r1.momentum_residual))
            worst_mass = max(worst_mass, abs(r0.mass_residual) / r0.mass_scale)
            worst_mom = max(worst_mom, float(np.max(np.abs(r0.momentum_residual)
                                                    / r0.momentum_scale)))
    ok = worst_mass <= 1e-12 and worst_mom <= 1e-12 and identical and clk.elapsed < 5.0
    assert verdict(3, ok, f"mass {worst_mass:.1e}, momentum {worst_mom:.1e} (<= 1e-12 * scale), "
                          f"bit-identical across mu: {identical}, {clk.elapsed:.2f}s (< 5s)")


FD_CASES = [
    (ModelParams(1, gamma=1.0, xi=1.0), [1.0], [0.2], [0.3]),
    (ModelParams(1, gamma=2.0, xi=1.0), [1.0], [0.0], [-0.8]),
    (ModelParams(2, gamma=1.4, xi=-0.5), [1.0, 1.5], [0.1, -0.2], [0.2, -0.4]),
    (ModelParams(2, gamma=5 / 3, xi=0.8, d=[0.3, -0.1]), [1.2, 0.9], [0.0, 0.3], [0.1, 0.5]),
    (ModelParams(2, gamma=3.0, xi=1.5, K=0.5), [1.0, 1.0], [0.4, 0.2], [-0.3, 0.2]),
    (ModelParams(3, gamma=1.0, xi=-1.0), [1.0, 1.2, 0.8], [0.3, 0.0, 0.1], [0.2, 0.1, -0.3]),
    (ModelParams(3, gamma=1.4, xi=0.5, mu=1.0), [1.0, 1.1, 0.9], [0.1, -0.1, 0.0],
     [0.4, -0.2, 0.1]),
    (ModelParams(3, gamma=2.0, xi=1.0, alpha=2.0), [1.0, 1.3, 0.7], [0.0, 0.2, -0.1],
     [-0.5, 0.3, 0.2]),
    (ModelParams(3, gamma=5 / 3, xi=-0.3, d=[0.5, 0.0, -0.5]), [1.0, 1.0, 1.0],
     [0.2, 0.2, 0.2], [-0.2, 0.4, 0.6]),
    (ModelParams(1, gamma=3.0, xi=-1.0, K=2.0), [1.5], [0.5], [0.7]),
]


def test_04_fd_convergence(verdict):
    orders = []
    with Clock() as clk:
        for params, a0, a1, x in FD_CASES:
            field = ExactField(params, EmdenState(0.0, a0, a1), 0.6)
            _, mass_fit, mom_fits = fd_sweep(field, 0.5, np.array(x), params, h0=1e-2, halvings=4)
            orders.extend([mass_fit.order] + [f.order for f in mom_fits])
    lo, hi = min(orders), max(orders)
    ok = 1.7 <= lo and hi <= 2.3 and clk.elapsed < 10.0
    assert verdict(4, ok, f"fitted orders in [{lo:.4f}, {hi:.4f}] (within [1.7, 2.3]), "
                          f"{clk.elapsed:.2f}s (< 10s)")


def test_05_blowup_oracle(verdict):
    p = ModelParams(1, gamma=1.0, xi=-1.0)
    with Clock() as clk:
        traj = integrate(p, EmdenState(0.0, [1.0], [0.0]), 5.0, Tolerance(1e-10, 1e-12))
        oracle = touchdown_time_quadrature(p, 1.0, 0.0)
    term = traj.termination
    err = abs(term.t - oracle) if isinstance(term, Touchdown) else math.inf
    ok = err <= 1e-6 and abs(oracle - SQRT_PI_2) < 1e-12 and clk.elapsed < 1.0
    assert verdict(5, ok, f"touchdown {term.t:.10f} vs oracle {oracle:.10f}, error {err:.1e} "
                          f"(<= 1e-6), {clk.elapsed:.2f}s (< 1s)")


def test_06_blowup_bound(verdict):
    p = ModelParams(2, gamma=2.0, xi=-1.0)
    with Clock() as clk:
        res = classify(p, EmdenState(0.0, [1.0, 1.0], [-1.0, -0.5]), 10.0)
    ok = (res.verdict == BLOWUP_BY_THEOREM and res.case == "2a" and res.bound_T == 1.0
          and res.t_est is not None and 0.0 < res.t_est <= 1.0 and clk.elapsed < 1.0)
    assert verdict(6, ok, f"case {res.case}, bound_T {res.bound_T}, observed touchdown "
                          f"{res.t_est} (in (0, 1]), {clk.elapsed:.2f}s (< 1s)")


def test_07_global_existence(verdict):
    runs = [(gamma, N, a0) for gamma in (1.0, 2.0)
            for N, a0 in ((1, [1.0]), (2, [1.0, 1.5]), (3, [0.8, 1.0, 1.3]))]
    fine = True
    with Clock() as clk:
        for gamma, N, a0 in runs:
            p = ModelParams(N, gamma=gamma, xi=1.0)
            traj = integrate(p, EmdenState(0.0, a0, [0.0] * N), 100.0)
            fine &= traj.termination.kind == "reached_end" and traj.t_last == 100.0
            fine &= bool(np.all(np.diff(traj.a, axis=0) >= 0.0))
    ok = fine and clk.elapsed < 5.0
    assert verdict(7, ok, f"{len(runs)} runs reach t=100 with nondecreasing a: {fine}, "
                          f"{clk.elapsed:.2f}s (< 5s)")


def test_08_mass_conservation(verdict):
    p = ModelParams(2, gamma=1.0, K=1.0, xi=2.0, alpha=1.0)
    init = EmdenState(0.0, [1.0, 1.0], [0.3, -0.2])
    with Clock() as clk:
        traj = integrate(p, init, 0.5)
        m0 = total_mass(init, p, MassQuadrature())
        m1 = total_mass(traj.final_state(), p, MassQuadrature())
    rel = abs(m1 - m0) / m0
    ok = (abs(m0 - math.pi) <= 1e-4 and abs(m1 - math.pi) <= 1e-4 and rel <= 1e-6
          and clk.elapsed < 5.0)
    assert verdict(8, ok, f"mass {m0:.12f} / {m1:.12f} vs pi, relative change {rel:.1e} "
                          f"(<= 1e-6), {clk.elapsed:.2f}s (< 5s)")


def test_09_fv_crosscheck(verdict):
    p = ModelParams(1, gamma=1.0, K=1.0, xi=1.0, alpha=1.0)
    init = EmdenState(0.0, [1.0], [0.0])
    with Clock() as clk:
        second = fv_run(FvConfig(p, init, (-8.0,), (8.0,), 0.3, levels=(64, 128, 256, 512)))
        first = fv_run(FvConfig(p, init, (-8.0,), (8.0,), 0.3, levels=(64, 128, 256, 512),
                                order=1))
    ok = (not second.failed and not first.failed and second.monotone and first.monotone
          and 1.5 <= second.rho_l1_order <= 2.2 and 0.8 <= first.rho_l1_order <= 1.2
          and clk.elapsed < 60.0)
    assert verdict(9, ok, f"MUSCL order {second.rho_l1_order:.3f} (in [1.5, 2.2]), first-order "
                          f"{first.rho_l1_order:.3f} (in [0.8, 1.2]), monotone "
                          f"{second.monotone and first.monotone}, {clk.elapsed:.2f}s (< 60s)")


ACCEPTANCE_RUNS = [
    ("integrate", "radial.ini"),
    ("integrate", "touchdown.ini"),
    ("classify-sweep", "sweep.ini"),
    ("field", "field.ini"),
    ("verify-residual", "residual.ini"),
    ("mass-check", "mass.ini"),
    ("crosscheck", "crosscheck.ini"),
    ("crosscheck", "crosscheck_first_order.ini"),
]


def test_10_determinism(verdict, tmp_path):
    mismatched = []
    for command, name in ACCEPTANCE_RUNS:
        outputs = []
        for threads in (1, 8):
            out = tmp_path / f"{name}.{threads}.csv"
            code = main([command, "--config", str(CONFIGS / name), "--out", str(out),
                         "--threads", str(threads)])
            assert code == 0, (command, name)
            outputs.append(out.read_bytes())
        if outputs[0] != outputs[1]:
            mismatched.append(name)
    ok = not mismatched
    assert verdict(10, ok, f"{len(ACCEPTANCE_RUNS)} CLI runs byte-identical with 1 and 8 threads"
                           + (f"; differing: {mismatched}" if mismatched else ""))


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
