import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emdenlab import BoundaryError, DomainError, EmdenState, InputError, ModelParams
from emdenlab.errors import UnsupportedRegimeError
from emdenlab.profile import (MassQuadrature, evaluate_field, f_eval, f_prime, fields,
                              mass_tail_bound, s_limit, s_variable, support_geometry, total_mass)
from emdenlab.emden import integrate


def state(a, a_dot=None, t=0.0):
    a = np.asarray(a, dtype=float)
    return EmdenState(t, a, np.zeros_like(a) if a_dot is None else a_dot)


class TestParams:
    def test_defaults_and_drift(self):
        p = ModelParams(3)
        assert p.d.shape == (3,) and np.all(p.d == 0.0)

    @pytest.mark.parametrize("kwargs", [
        dict(N=0), dict(N=2, gamma=0.9), dict(N=2, K=0.0), dict(N=2, mu=-1.0),
        dict(N=2, alpha=-0.1), dict(N=2, d=[1.0]), dict(N=1.5),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(InputError):
            ModelParams(**kwargs)

    def test_state_requires_positive_scales(self):
        with pytest.raises(DomainError):
            EmdenState(0.0, [1.0, 0.0], [0.0, 0.0])
        with pytest.raises(InputError):
            EmdenState(0.0, [1.0, 1.0], [0.0])

    def test_frozen_arrays(self):
        s = state([1.0, 2.0])
        with pytest.raises(ValueError):
            s.a[0] = 3.0


class TestSVariable:
    def test_centre_is_zero(self):
        p = ModelParams(2, d=[0.3, -1.2])
        assert s_variable(state([1.7, 0.4]), -p.d, p) == 0.0

    def test_two_dimensional(self):
        assert s_variable(state([1.0, 2.0]), [1.0, 2.0], ModelParams(2)) == pytest.approx(2.0)

    def test_with_drift(self):
        assert s_variable(state([2.0]), [1.0], ModelParams(1, d=[1.0])) == pytest.approx(1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            s_variable(state([1.0, 1.0]), [1.0, 2.0, 3.0], ModelParams(2))
        with pytest.raises(InputError):
            s_variable(state([1.0]), [1.0], ModelParams(2))


class TestProfile:
    def test_isothermal_centre(self):
        assert f_eval(0.0, ModelParams(1, gamma=1.0, alpha=1.0)) == 1.0

    def test_isothermal_value(self):
        p = ModelParams(1, gamma=1.0, K=1.0, xi=2.0, alpha=1.0)
        assert f_eval(1.0, p) == pytest.approx(math.exp(-1.0), rel=1e-15)
        assert f_eval(1.0, p) == pytest.approx(0.367879, abs=5e-7)

    def test_support_edge_truncates(self):
        assert f_eval(4.0, ModelParams(1, gamma=2.0, K=1.0, xi=1.0, alpha=1.0)) == 0.0
        assert f_eval(7.0, ModelParams(1, gamma=2.0, K=1.0, xi=1.0, alpha=1.0)) == 0.0

    def test_polytropic_value(self):
        p = ModelParams(1, gamma=3.0, K=1.0, xi=3.0, alpha=4.0)
        assert f_eval(1.0, p) == pytest.approx(math.sqrt(3.0), rel=1e-15)

    def test_amplitude_enters_inside_power(self):
        p = ModelParams(1, gamma=1.5, alpha=4.0)
        assert f_eval(0.0, p) == pytest.approx(16.0)

    def test_negative_s(self):
        with pytest.raises(InputError):
            f_eval(-1e-3, ModelParams(1))

    def test_vectorised(self):
        p = ModelParams(1, gamma=2.0, xi=1.0)
        out = f_eval(np.array([0.0, 1.0, 4.0, 5.0]), p)
        np.testing.assert_allclose(out, [1.0, 0.75, 0.0, 0.0])


def central_difference(fun, s, h=1e-5):
    return (fun(s + h) - fun(s - h)) / (2 * h)


class TestProfileDerivative:
    def test_isothermal_at_origin(self):
        p = ModelParams(1, gamma=1.0, K=1.0, xi=2.0, alpha=1.0)
        assert f_prime(0.0, p) == -1.0
        # s=0 is the end of the domain; difference at a nearby interior point instead
        assert f_prime(0.5, p) == pytest.approx(central_difference(lambda s: f_eval(s, p), 0.5),
                                                abs=1e-8)

    @pytest.mark.parametrize("gamma", [1.0, 1.4, 2.0, 3.0])
    def test_zero_xi_gives_flat_profile(self, gamma):
        assert f_prime(0.7, ModelParams(1, gamma=gamma, xi=0.0)) == 0.0

    def test_linear_profile(self):
        p = ModelParams(1, gamma=2.0, K=1.0, xi=1.0, alpha=1.0)
        assert f_prime(1.0, p) == pytest.approx(-0.25, rel=1e-15)
        assert p.xi / (2 * p.K * p.gamma) + f_eval(1.0, p) ** 0 * f_prime(1.0, p) == 0.0

    @pytest.mark.parametrize("gamma,xi,alpha,s", [
        (1.0, 1.3, 0.8, 0.9), (1.4, 0.7, 1.1, 0.5), (5 / 3, -1.2, 0.6, 2.0), (3.0, 2.0, 2.5, 1.2)])
    def test_against_finite_difference(self, gamma, xi, alpha, s):
        p = ModelParams(1, gamma=gamma, K=0.9, xi=xi, alpha=alpha)
        fd = central_difference(lambda v: f_eval(v, p), s)
        assert f_prime(s, p) == pytest.approx(fd, rel=1e-7, abs=1e-9)

    def test_vacuum_raises(self):
        with pytest.raises(BoundaryError):
            f_prime(5.0, ModelParams(1, gamma=2.0, xi=1.0))

    @settings(max_examples=1000, deadline=None)
    @given(gamma=st.sampled_from([1.0, 1.4, 2.0, 3.0]),
           K=st.floats(0.2, 5.0), xi=st.floats(-5.0, 5.0), alpha=st.floats(0.05, 3.0),
           frac=st.floats(0.0, 0.99))
    def test_profile_ode_identity(self, gamma, K, xi, alpha, frac):
        p = ModelParams(1, gamma=gamma, K=K, xi=xi, alpha=alpha)
        s_max = s_limit(p)
        s = frac * (10.0 if s_max is None else min(s_max, 50.0))
        f = f_eval(s, p)
        if f <= 0.0:
            return
        c = xi / (2 * K * gamma)
        assert abs(c + f ** (gamma - 2) * f_prime(s, p)) <= 1e-10 * (1 + abs(c))

    @settings(max_examples=200, deadline=None)
    @given(gamma=st.sampled_from([1.0, 1.2, 1.4, 5 / 3, 2.0, 3.0]), xi=st.floats(-3, 3),
           alpha=st.floats(0.0, 3.0), s=st.floats(0.0, 50.0))
    def test_nonnegative_and_continuous(self, gamma, xi, alpha, s):
        p = ModelParams(1, gamma=gamma, xi=xi, alpha=alpha)
        f = f_eval(s, p)
        assert f >= 0.0
        # Hoelder-continuous at the vacuum edge, so compare at a tiny offset
        eps = 1e-12
        assert abs(f_eval(s + eps, p) - f) <= 1e-5 * max(1.0, f)


class TestFields:
    def test_static_scales_have_zero_velocity(self):
        p = ModelParams(2, xi=1.0)
        sample = evaluate_field(state([1.3, 0.7]), [0.4, -2.0], p)
        assert np.all(sample.u == 0.0)

    def test_substitution_example(self):
        p = ModelParams(2, gamma=1.0, K=1.0, xi=2.0, alpha=1.0)
        sample = evaluate_field(EmdenState(0.0, [1.0, 2.0], [1.0, -1.0]), [1.0, 2.0], p)
        assert sample.s == pytest.approx(2.0)
        assert sample.rho == pytest.approx(math.exp(-2.0) / 2.0, rel=1e-14)
        assert sample.rho == pytest.approx(0.0676676, abs=1e-7)
        np.testing.assert_allclose(sample.u, [1.0, -1.0])

    def test_unit_scales_reduce_to_profile(self):
        p = ModelParams(3, gamma=5 / 3, xi=0.5, alpha=1.2)
        x = np.array([0.3, -0.2, 0.5])
        sample = evaluate_field(state(np.ones(3)), x, p)
        assert sample.rho == f_eval(float(x @ x), p)
        assert np.all(sample.u == 0.0)

    def test_compositional_consistency(self):
        p = ModelParams(2, gamma=1.4, xi=0.8, alpha=1.1, d=[0.2, -0.1])
        st_ = EmdenState(0.0, [0.8, 1.6], [0.1, 0.2])
        x = [0.5, 0.9]
        sample = evaluate_field(st_, x, p)
        assert sample.rho == f_eval(s_variable(st_, x, p), p) / (0.8 * 1.6)

    @settings(max_examples=100, deadline=None)
    @given(theta=st.floats(0, 2 * math.pi), r=st.floats(0.0, 1.8))
    def test_ellipsoid_symmetry(self, theta, r):
        p = ModelParams(2, gamma=2.0, xi=1.0, d=[0.5, -0.25])
        st_ = state([1.0, 2.5])
        # two points on the same level set s = r^2
        x1 = st_.a * r * np.array([math.cos(theta), math.sin(theta)]) - p.d
        x2 = st_.a * r * np.array([math.cos(theta + 1.0), math.sin(theta + 1.0)]) - p.d
        rho, _, _ = fields(st_, np.array([x1, x2]), p)
        assert rho[0] == pytest.approx(rho[1], rel=1e-12, abs=1e-15)


class TestSupport:
    def test_compact(self):
        p = ModelParams(2, gamma=2.0, K=1.0, xi=1.0, alpha=1.0)
        geom = support_geometry(state([1.0, 2.0]), p)
        assert geom.bounded and geom.s_max == pytest.approx(4.0)
        np.testing.assert_allclose(geom.semi_axes, [2.0, 4.0])
        assert f_eval(geom.s_max, p) == 0.0
        assert f_eval(0.999 * geom.s_max, p) > 0.0

    def test_isothermal_unbounded(self):
        assert not support_geometry(state([1.0]), ModelParams(1, gamma=1.0, xi=3.0)).bounded

    def test_attractive_polytropic_unbounded(self):
        geom = support_geometry(state([1.0, 1.0]), ModelParams(2, gamma=2.0, xi=-1.0))
        assert not geom.bounded and geom.s_max is None


class TestMass:
    def test_gaussian_two_dimensions(self):
        p = ModelParams(2, gamma=1.0, K=1.0, xi=2.0, alpha=1.0)
        assert total_mass(state([1.0, 1.0]), p) == pytest.approx(math.pi, abs=1e-10)

    def test_time_invariance_along_trajectory(self):
        p = ModelParams(2, gamma=1.0, K=1.0, xi=2.0, alpha=1.0, d=[0.3, -0.4])
        init = EmdenState(0.0, [1.0, 1.5], [0.2, -0.1])
        traj = integrate(p, init, 0.5)
        m0 = total_mass(init, p)
        m1 = total_mass(traj.final_state(), p)
        assert m1 == pytest.approx(m0, rel=1e-6)

    def test_compact_one_dimension_against_trapezoid(self):
        p = ModelParams(1, gamma=2.0, K=1.0, xi=1.0, alpha=1.0)
        y = np.linspace(-2.0, 2.0, 2_000_001)
        oracle = np.trapezoid(np.maximum(1.0 - y * y / 4.0, 0.0), y)
        mass = total_mass(state([1.0]), p, MassQuadrature(nodes=2 ** 15))
        assert mass == pytest.approx(oracle, abs=1e-8)
        assert oracle == pytest.approx(8.0 / 3.0, abs=1e-10)

    def test_gauss_rule_is_exact_for_polynomial_profile(self):
        p = ModelParams(1, gamma=2.0, K=1.0, xi=1.0, alpha=1.0)
        mass = total_mass(state([1.7]), p, MassQuadrature(nodes=4, rule="gauss"))
        assert mass == pytest.approx(8.0 / 3.0, rel=1e-14)

    def test_three_dimensional_compact(self):
        # f = 1 - s/4 on the ball s<=4: mass = int_0^2 (1 - r^2/4) 4 pi r^2 dr = 64 pi / 15
        p = ModelParams(3, gamma=2.0, K=1.0, xi=1.0, alpha=1.0)
        mass = total_mass(state([1.0, 0.5, 2.0]), p)
        assert mass == pytest.approx(64 * math.pi / 15, rel=2e-3)

    @pytest.mark.parametrize("kwargs", [dict(gamma=1.0, xi=0.0), dict(gamma=1.0, xi=-1.0),
                                        dict(gamma=2.0, xi=-0.5)])
    def test_infinite_mass_regimes(self, kwargs):
        with pytest.raises(UnsupportedRegimeError):
            total_mass(state([1.0]), ModelParams(1, **kwargs))

    def test_tail_bound(self):
        assert mass_tail_bound(ModelParams(2, gamma=1.0, xi=2.0)) == pytest.approx(math.exp(-40))
        assert mass_tail_bound(ModelParams(2, gamma=2.0, xi=2.0)) == 0.0
